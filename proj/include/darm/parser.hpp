#ifndef DARM_PARSER_HPP
#define DARM_PARSER_HPP

#include <stdexcept>
#include <string>

#include "darm/ir.hpp"

namespace darm {

class ParseError : public std::runtime_error {
 public:
  ParseError(int line, int col, const std::string &msg)
      : std::runtime_error(std::to_string(line) + ":" + std::to_string(col) +
                           ": " + msg),
        line(line),
        col(col) {}
  int line;
  int col;
};

// Parses the textual IR. Throws ParseError on malformed input. The result is
// structurally checked (arity, phi placement, duplicate names); full SSA
// checking is the verifier's job.
Module parseModule(const std::string &text);

std::string printModule(const Module &m);
std::string printFunction(const Function &f);

Module parseModuleFile(const std::string &path);

}  // namespace darm

#endif
