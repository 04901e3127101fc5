#ifndef DARM_INTERP_HPP
#define DARM_INTERP_HPP

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "darm/ir.hpp"

namespace darm {

struct WarpInput {
  int warpSize = 32;
  // One vector per function parameter; a single element is broadcast to all
  // lanes, otherwise the vector must have warpSize elements.
  std::vector<std::vector<int32_t>> args;
  std::map<std::string, std::vector<int32_t>> globalInit;
  std::map<std::string, std::vector<int32_t>> sharedInit;
  uint64_t seed = 0;  // recorded for reproducibility, not consumed here
};

struct WarpExecStats {
  int64_t issuedInstructions = 0;
  int64_t threadCycles = 0;        // sum of latency * warpSize
  int64_t usefulThreadCycles = 0;  // sum of latency * active lanes
  int64_t serializedCycles = 0;    // threadCycles - usefulThreadCycles
  double utilization = 1.0;
  int64_t divergentBranchCount = 0;
  int64_t sharedMemIssues = 0;
  int64_t globalMemIssues = 0;
};

struct LaneFault {
  int lane = 0;
  std::string block;
  std::string message;
};

struct WarpResult {
  // One entry per lane; nullopt when the lane returned void or faulted.
  std::vector<std::optional<int32_t>> returns;
  std::map<std::string, std::vector<int32_t>> globalFinal;
  std::map<std::string, std::vector<int32_t>> sharedFinal;
  WarpExecStats stats;
  std::vector<LaneFault> faults;
  bool nonTerminated = false;
  // Set when an undef-derived value reached a branch condition, a store, or
  // a return value of a live lane.
  bool taintedObservable = false;
  std::string taintNote;
};

// Lockstep execution of one warp with IPDOM reconvergence; the true path of
// a divergent branch runs first. Deterministic.
WarpResult executeWarp(const Module &m, const Function &f, const WarpInput &in,
                       const LatencyModel &lm, int64_t maxSteps = 10000000);

struct CompareVerdict {
  bool equal = true;
  std::string diff;  // first difference, empty when equal
};

// Bit-exact comparison of per-lane returns and final global memory. A run
// with observable taint or a fault mismatch never compares equal.
CompareVerdict compareRuns(const WarpResult &a, const WarpResult &b);

}  // namespace darm

#endif
