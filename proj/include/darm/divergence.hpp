#ifndef DARM_DIVERGENCE_HPP
#define DARM_DIVERGENCE_HPP

#include <set>
#include <string>

#include "darm/ir.hpp"

namespace darm {

struct DivergenceInfo {
  std::set<std::string> divergentValues;
  std::set<std::string> divergentBranches;  // blocks with a divergent condbr

  bool valueDivergent(const std::string &v) const {
    return divergentValues.count(v) > 0;
  }
  bool branchDivergent(const std::string &block) const {
    return divergentBranches.count(block) > 0;
  }
};

// Taint-style divergence: tid results seed the set; data dependence and
// sync dependence (phis in the dominance frontier of a divergent branch
// block) propagate it to a least fixed point.
DivergenceInfo analyzeDivergence(const Function &f);

}  // namespace darm

#endif
