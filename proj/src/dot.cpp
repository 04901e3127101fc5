#include "darm/dot.hpp"

#include <sstream>

#include "darm/parser.hpp"

namespace darm {

namespace {

std::string escape(const std::string &s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    if (c == '\n') {
      out += "\\l";
      continue;
    }
    out.push_back(c);
  }
  return out;
}

std::string blockText(const BasicBlock &b) {
  Function tmp;
  tmp.name = "x";
  tmp.blocks.push_back(b);
  std::string printed = printFunction(tmp);
  // Strip the fn header and closing brace; keep the block listing.
  auto first = printed.find('\n');
  auto last = printed.rfind("}\n");
  return printed.substr(first + 1, last - first - 1);
}

}  // namespace

std::string emitDot(const Function &f, DotLabelMode mode) {
  std::ostringstream os;
  os << "digraph \"" << escape(f.name) << "\" {\n";
  os << "  node [shape=record];\n";
  for (const auto &b : f.blocks) {
    std::string label = mode == DotLabelMode::BlocksOnly
                            ? "^" + b.name
                            : blockText(b);
    os << "  \"" << escape(b.name) << "\" [label=\"" << escape(label)
       << "\"];\n";
  }
  for (const auto &b : f.blocks)
    for (const auto &s : b.successors())
      os << "  \"" << escape(b.name) << "\" -> \"" << escape(s) << "\";\n";
  os << "}\n";
  return os.str();
}

}  // namespace darm
