#ifndef DARM_VERIFIER_HPP
#define DARM_VERIFIER_HPP

#include <string>
#include <vector>

#include "darm/ir.hpp"

namespace darm {

struct SsaViolation {
  std::string block;
  std::string value;  // offending value, empty for structural problems
  std::string message;
};

// Checks the Function invariants: unique entry without predecessors, all
// blocks reachable, definitions dominate uses, one incoming value per phi
// per predecessor, known value references. Returns an empty list iff valid.
std::vector<SsaViolation> verifySsa(const Function &f);

std::vector<SsaViolation> verifyModule(const Module &m);

}  // namespace darm

#endif
