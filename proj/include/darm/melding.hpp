#ifndef DARM_MELDING_HPP
#define DARM_MELDING_HPP

#include <map>
#include <string>
#include <vector>

#include "darm/divergence.hpp"
#include "darm/ir.hpp"
#include "darm/regions.hpp"

namespace darm {

enum class MeldKind { NotMeldable, RegionRegion, BlockRegion, BlockBlock };

const char *meldKindName(MeldKind k);

// A simplified region whose entry branch is divergent and whose two
// successors are mutually non-post-dominating.
struct MeldableDivergentRegion {
  std::string entry;
  std::string exit;
  Operand condition;
  std::string truePathEntry;
  std::string falsePathEntry;
};

struct MeldConfig {
  double threshold = 0.2;    // MP_S cutoff, valid range [0.0, 0.5]
  double gapPenalty = -1.0;  // per gap column in instruction alignment
  int maxIterations = 32;
  bool runOnce = false;
  // Restricts melding to block-block pairs in diamond regions (both paths a
  // single block each).
  bool branchFusionOnly = false;
};

std::vector<MeldableDivergentRegion> detectMeldableRegions(
    const Function &f, const DivergenceInfo &div);

// Classification of a true-path/false-path subgraph pair.
MeldKind classifyMeldable(const Function &f, const SeseSubgraph &sT,
                          const SeseSubgraph &sF);

// Role-preserving CFG isomorphism between two subgraphs (taken edges map to
// taken edges). On success fills `mapping` with sT-block -> sF-block.
bool isomorphicSubgraphs(const Function &f, const SeseSubgraph &sT,
                         const SeseSubgraph &sF,
                         std::map<std::string, std::string> *mapping);

// Block melding profitability: latency-weighted shared opcode frequency,
// in [0, 0.5]; 0.5 means identical opcode frequency profiles.
double mpBlock(const BasicBlock &b1, const BasicBlock &b2,
               const LatencyModel &lm);

// Subgraph profitability: latency-weighted mean of mpBlock over the block
// correspondence. `mapping` maps s1 blocks to s2 blocks and must be a
// bijection over their block sets.
double mpSubgraph(const Function &f, const SeseSubgraph &s1,
                  const SeseSubgraph &s2,
                  const std::map<std::string, std::string> &mapping,
                  const LatencyModel &lm);

struct InstrAlignEntry {
  int t = -1;  // index into the true-side body, -1 for a gap
  int f = -1;  // index into the false-side body, -1 for a gap
};

struct InstructionAlignment {
  std::vector<InstrAlignEntry> entries;
  double score = 0.0;
};

// Global alignment of the two block bodies. Match score is the melded
// opcode's latency; incompatible instructions never align; ties prefer a
// match, then a true-side-first gap.
InstructionAlignment alignInstructions(const BasicBlock &bT,
                                       const BasicBlock &bF,
                                       const LatencyModel &lm,
                                       double gapPenalty);

struct AlignedTuple {
  int t = -1;  // index into the true-path subgraph sequence, -1 for a gap
  int f = -1;
  MeldKind kind = MeldKind::NotMeldable;
  double score = 0.0;  // MP_S when both sides matched
};

struct SubgraphAlignment {
  std::vector<AlignedTuple> tuples;
  double total = 0.0;
};

// Order-preserving alignment of the per-path subgraph sequences maximizing
// total MP_S; skipping a subgraph costs nothing.
SubgraphAlignment alignSubgraphs(const Function &f,
                                 const std::vector<SeseSubgraph> &truePath,
                                 const std::vector<SeseSubgraph> &falsePath,
                                 const MeldConfig &cfg, const LatencyModel &lm);

// Replication plan for melding a single block against a region: an
// isomorphic skeleton of the region with the block's instructions placed at
// its most profitable partner and branch conditions concretized so every
// path executes the block.
struct ReplicaPlan {
  std::vector<BasicBlock> blocks;  // pre-order, entry first
  std::map<std::string, std::string> mapping;  // replica block -> region block
  std::string slotReplicaBlock;
  std::string slotRegionBlock;
  double score = 0.0;  // MP_S of the replica against the region
};

ReplicaPlan planReplication(const Function &f, const BasicBlock &b,
                            const SeseSubgraph &region, const LatencyModel &lm);

// Routes values defined in either subgraph and used outside of it through
// phis in a fresh confluence block joining the two exits. Returns true if
// the function changed.
bool preprocessSubgraphs(Function &f, const SeseSubgraph &sT,
                         const SeseSubgraph &sF, const Operand &cond);

struct MeldOutcome {
  std::string meldedEntry;
  std::vector<std::string> meldedBlocks;
  int selectsInserted = 0;
  int unpredicatedRuns = 0;
};

// Melds the pair in place: replication (for block-region), preprocessing,
// block-pair melding with operand selects, exit-branch melding, phi copying
// and unpredication. The caller's analyses are invalidated.
MeldOutcome meldSubgraphs(Function &f, SeseSubgraph sT, SeseSubgraph sF,
                          const Operand &cond, MeldKind kind,
                          const MeldConfig &cfg, const LatencyModel &lm);

// CFG/SSA cleanup to a fixpoint: folds trivial branches and phis, merges
// straight-line chains, drops empty forwarding and unreachable blocks, and
// erases unused pure definitions. Returns true if the function changed.
bool postOptimize(Function &f);

struct MeldAction {
  std::string regionEntry;
  std::string regionExit;
  std::string kind;
  double mpScore = 0.0;
  int iteration = 0;
  int blocksMelded = 0;
  int selectsInserted = 0;
  int unpredicatedRuns = 0;
};

struct MeldReport {
  std::string function;
  int iterations = 0;
  bool converged = true;
  std::vector<MeldAction> melds;
};

// The fixpoint driver: repeatedly finds the first profitable aligned pair in
// some meldable divergent region, melds it, simplifies, and restarts the
// analyses, until nothing changes or maxIterations is hit.
MeldReport runDarm(Function &f, const MeldConfig &cfg, const LatencyModel &lm);

// Profitable tuples visible in the first iteration, computed on a scratch
// copy (the input function is not modified).
struct CandidateTuple {
  std::string regionEntry;
  std::string regionExit;
  std::string trueEntry;
  std::string falseEntry;
  std::string kind;
  double score = 0.0;
};

std::vector<CandidateTuple> firstIterationCandidates(const Function &f,
                                                     const MeldConfig &cfg,
                                                     const LatencyModel &lm);

// SSA repair helper: after `value`'s definition moved to `defBlock`, insert
// phis at iterated dominance frontiers and rewrite uses so every use sees a
// dominating definition (undef on paths that bypass the definition).
void repairSsa(Function &f, const std::string &value,
               const std::string &defBlock);

}  // namespace darm

#endif
