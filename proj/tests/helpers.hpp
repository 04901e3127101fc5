#ifndef DARM_TESTS_HELPERS_HPP
#define DARM_TESTS_HELPERS_HPP

#include <algorithm>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "darm/fixtures.hpp"
#include "darm/interp.hpp"
#include "darm/ir.hpp"
#include "darm/parser.hpp"

namespace testing {

inline std::string corpusPath(const std::string &name) {
  return std::string(CORPUS_DIR) + "/" + name;
}

inline darm::Module loadCorpus(const std::string &name) {
  return darm::parseModuleFile(corpusPath(name));
}

inline const std::vector<std::string> &positiveKernels() {
  static const std::vector<std::string> k = {
      "sb1.ir",  "sb1r.ir", "sb2.ir",    "sb2r.ir",  "sb3.ir",
      "sb3r.ir", "sb4.ir",  "sb4r.ir",   "bitonic.ir", "nested.ir"};
  return k;
}

inline const std::vector<std::string> &negativeKernels() {
  static const std::vector<std::string> k = {
      "neg_uniform.ir", "neg_ifthen.ir",   "neg_multiret.ir",
      "neg_barrier.ir", "neg_emptyarm.ir", "neg_looparms.ir"};
  return k;
}

// ---- random CFG generation -------------------------------------------------
// Every block i < n-1 branches to i+1 (so all blocks reach the single ret)
// plus an optional random extra edge, which may form a loop.
inline darm::Function makeRandomCfg(std::mt19937_64 &rng, int maxBlocks) {
  using namespace darm;
  int n = 2 + int(rng() % uint64_t(maxBlocks - 1));
  Function f;
  f.name = "rand";
  f.params = {"p"};
  for (int i = 0; i < n; ++i) {
    BasicBlock b;
    b.name = "b" + std::to_string(i);
    if (i == n - 1) {
      b.terminator.op = Opcode::Ret;
    } else if (rng() % 2 == 0) {
      b.terminator.op = Opcode::Br;
      b.terminator.operands = {Operand::label("b" + std::to_string(i + 1))};
    } else {
      int other = int(rng() % uint64_t(n));
      b.terminator.op = Opcode::CondBr;
      b.terminator.operands = {Operand::value("p"),
                               Operand::label("b" + std::to_string(i + 1)),
                               Operand::label("b" + std::to_string(other))};
    }
    f.blocks.push_back(std::move(b));
  }
  return f;
}

// Dominance oracle by simple-path enumeration: a dominates b iff every
// simple path root -> b passes through a.
inline std::map<std::string, std::set<std::string>> pathDominators(
    const std::vector<std::string> &blocks,
    const std::map<std::string, std::vector<std::string>> &succs,
    const std::string &root) {
  std::map<std::string, std::set<std::string>> dom;
  std::set<std::string> all(blocks.begin(), blocks.end());
  for (const auto &b : blocks) dom[b] = all;  // refined below
  std::vector<std::string> path;
  std::set<std::string> onPath;
  std::function<void(const std::string &)> dfs = [&](const std::string &cur) {
    path.push_back(cur);
    onPath.insert(cur);
    // Every prefix of a simple path is itself a simple path to its endpoint.
    std::set<std::string> prefix(path.begin(), path.end());
    std::set<std::string> refined;
    std::set_intersection(dom[cur].begin(), dom[cur].end(), prefix.begin(),
                          prefix.end(),
                          std::inserter(refined, refined.begin()));
    dom[cur] = refined;
    auto it = succs.find(cur);
    if (it != succs.end())
      for (const auto &s : it->second)
        if (!onPath.count(s)) dfs(s);
    onPath.erase(cur);
    path.pop_back();
  };
  dfs(root);
  // Unreachable blocks keep the full set; callers should only query
  // reachable ones (makeRandomCfg keeps everything reachable).
  return dom;
}

inline std::map<std::string, std::vector<std::string>> successorMap(
    const darm::Function &f) {
  std::map<std::string, std::vector<std::string>> succs;
  for (const auto &b : f.blocks) succs[b.name] = b.successors();
  return succs;
}

inline std::map<std::string, std::vector<std::string>> reverseMap(
    const std::map<std::string, std::vector<std::string>> &succs) {
  std::map<std::string, std::vector<std::string>> rev;
  for (const auto &[b, ss] : succs) {
    rev[b];
    for (const auto &s : ss) rev[s].push_back(b);
  }
  return rev;
}

// ---- exhaustive instruction alignment --------------------------------------
inline bool oracleCompatible(const darm::Instruction &a,
                             const darm::Instruction &b) {
  using darm::Opcode;
  if (a.op != b.op) return false;
  switch (a.op) {
    case Opcode::LoadShared:
    case Opcode::StoreShared:
    case Opcode::LoadGlobal:
    case Opcode::StoreGlobal:
      return a.operands[0].text == b.operands[0].text;
    default:
      return true;
  }
}

inline double oracleAlignScore(const std::vector<darm::Instruction> &a,
                               const std::vector<darm::Instruction> &b,
                               const darm::LatencyModel &lm, double gap) {
  size_t n = a.size(), m = b.size();
  std::vector<std::vector<double>> dp(n + 1, std::vector<double>(m + 1));
  for (size_t i = 0; i <= n; ++i) dp[i][0] = double(i) * gap;
  for (size_t j = 0; j <= m; ++j) dp[0][j] = double(j) * gap;
  for (size_t i = 1; i <= n; ++i)
    for (size_t j = 1; j <= m; ++j) {
      double best = std::max(dp[i - 1][j], dp[i][j - 1]) + gap;
      if (oracleCompatible(a[i - 1], b[j - 1]))
        best = std::max(best,
                        dp[i - 1][j - 1] + double(lm.latency(a[i - 1].op)));
      dp[i][j] = best;
    }
  return dp[n][m];
}

// ---- semantic oracle -------------------------------------------------------
inline std::string oracleCompare(const darm::Module &m1,
                                 const darm::Function &f1,
                                 const darm::Module &m2,
                                 const darm::Function &f2, int fixtures,
                                 uint64_t seed,
                                 const std::vector<int> &warps = {4, 8, 32}) {
  for (int w : warps) {
    for (int i = 0; i < fixtures; ++i) {
      darm::WarpInput in = darm::makeRandomInput(m1, f1, w, seed + i);
      darm::WarpResult a = darm::executeWarp(m1, f1, in, darm::LatencyModel::defaults());
      darm::WarpResult b = darm::executeWarp(m2, f2, in, darm::LatencyModel::defaults());
      darm::CompareVerdict v = darm::compareRuns(a, b);
      if (!v.equal)
        return f1.name + " warp " + std::to_string(w) + " fixture " +
               std::to_string(i) + ": " + v.diff;
    }
  }
  return "";
}

}  // namespace testing

#endif
