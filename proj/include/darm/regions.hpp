#ifndef DARM_REGIONS_HPP
#define DARM_REGIONS_HPP

#include <map>
#include <set>
#include <string>
#include <vector>

#include "darm/dominators.hpp"
#include "darm/ir.hpp"

namespace darm {

// A region per Definition 2-style dominance/post-dominance containment:
// every block of the body is dominated by `entry` and post-dominated by
// `exit`. The body excludes the exit block.
struct Region {
  std::string entry;
  std::string exit;
  bool simple = false;  // exactly one entry edge and one exit edge
  std::vector<std::string> body;
  std::vector<Region> children;
};

// Maximal regions rooted at branch blocks, nested by body inclusion.
// Top-level regions are returned in function block order.
std::vector<Region> computeRegions(const Function &f);

// A SESE subgraph: either a simple region (entry..exitBlock inclusive) or a
// single basic block with one predecessor and one successor.
struct SeseSubgraph {
  bool isBlock = false;
  std::string entry;
  std::string exitBlock;               // == entry for single blocks
  std::vector<std::string> blocks;     // pre-order, entry first
  bool contains(const std::string &b) const {
    for (const auto &x : blocks)
      if (x == b) return true;
    return false;
  }
};

// Splits the path from `sideEntry` up to (excluding) `join` into the ordered
// SESE subgraph sequence used for alignment. Requires the path to be
// simplified (unique exit edge per multi-block segment); throws otherwise.
std::vector<SeseSubgraph> decomposePath(const Function &f,
                                        const std::string &sideEntry,
                                        const std::string &join,
                                        const DomTree &dom,
                                        const DomTree &pdom);

// Blocks reachable from `from` without passing through `stop` (excludes
// `stop`, includes `from`).
std::set<std::string> reachableUntil(const Function &f, const std::string &from,
                                     const std::string &stop);

// Region simplification: materializes exit blocks so that every subregion of
// the region (entry, exit) has a single entry edge and a single exit edge.
// Idempotent. Returns true if the function changed.
bool simplifyRegion(Function &f, const std::string &entry,
                    const std::string &exit);

}  // namespace darm

#endif
