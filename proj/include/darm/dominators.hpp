#ifndef DARM_DOMINATORS_HPP
#define DARM_DOMINATORS_HPP

#include <map>
#include <string>
#include <vector>

#include "darm/ir.hpp"

namespace darm {

// Immediate-dominator tree over block names. The root has no idom entry.
class DomTree {
 public:
  const std::string &root() const { return root_; }
  // Returns empty string for the root or unknown blocks.
  std::string idom(const std::string &b) const;
  int depth(const std::string &b) const;
  bool contains(const std::string &b) const;
  // Reflexive dominance: dominates(a, a) is true.
  bool dominates(const std::string &a, const std::string &b) const;
  bool strictlyDominates(const std::string &a, const std::string &b) const;

  static DomTree build(const std::string &root,
                       const std::vector<std::string> &blocks,
                       const std::map<std::string, std::vector<std::string>> &preds,
                       const std::map<std::string, std::vector<std::string>> &succs);

 private:
  std::string root_;
  std::map<std::string, std::string> idom_;
  std::map<std::string, int> depth_;
};

// Forward dominators rooted at the entry block.
DomTree computeDominators(const Function &f);

// Post-dominators, computed on the reversed CFG rooted at the unique ret
// block. Throws if the function has no ret block or more than one, or if a
// block cannot reach the ret block.
DomTree computePostDominators(const Function &f);

// The unique block terminated by ret; throws unless exactly one exists.
std::string uniqueRetBlock(const Function &f);

// Dominance frontiers keyed by block name.
std::map<std::string, std::vector<std::string>> dominanceFrontiers(
    const Function &f, const DomTree &dom);

}  // namespace darm

#endif
