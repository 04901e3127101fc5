#include <algorithm>
#include <stdexcept>

#include "darm/dominators.hpp"
#include "darm/melding.hpp"

namespace darm {

const char *meldKindName(MeldKind k) {
  switch (k) {
    case MeldKind::RegionRegion: return "region-region";
    case MeldKind::BlockRegion: return "block-region";
    case MeldKind::BlockBlock: return "block-block";
    default: return "not-meldable";
  }
}

namespace {

bool regionHasBarrier(const Function &f, const std::set<std::string> &body) {
  for (const auto &b : body)
    for (const auto &i : f.findBlock(b)->body)
      if (i.op == Opcode::Barrier) return true;
  return false;
}

bool validRegion(const Function &f, const std::string &entry,
                 const std::string &exit, const DomTree &dom,
                 const DomTree &pdom, std::set<std::string> *bodyOut) {
  auto body = reachableUntil(f, entry, exit);
  for (const auto &b : body)
    if (!dom.dominates(entry, b) || !pdom.dominates(exit, b)) return false;
  if (bodyOut) *bodyOut = std::move(body);
  return true;
}

}  // namespace

std::vector<MeldableDivergentRegion> detectMeldableRegions(
    const Function &f, const DivergenceInfo &div) {
  std::vector<MeldableDivergentRegion> out;
  DomTree dom = computeDominators(f);
  DomTree pdom = computePostDominators(f);
  for (const auto &b : f.blocks) {
    if (b.terminator.op != Opcode::CondBr) continue;
    if (!div.branchDivergent(b.name)) continue;
    std::string exit = pdom.idom(b.name);
    if (exit.empty()) continue;
    std::set<std::string> body;
    if (!validRegion(f, b.name, exit, dom, pdom, &body)) continue;
    std::string bt = b.terminator.operands[1].text;
    std::string bf = b.terminator.operands[2].text;
    if (bt == bf) continue;
    if (pdom.dominates(bt, bf) || pdom.dominates(bf, bt)) continue;
    if (regionHasBarrier(f, body)) continue;
    MeldableDivergentRegion r;
    r.entry = b.name;
    r.exit = exit;
    r.condition = b.terminator.operands[0];
    r.truePathEntry = bt;
    r.falsePathEntry = bf;
    out.push_back(std::move(r));
  }
  return out;
}

MeldKind classifyMeldable(const Function &f, const SeseSubgraph &sT,
                          const SeseSubgraph &sF) {
  // A subgraph whose exit still branches cannot take part in exit-branch
  // melding; simplification removes these shapes beforehand.
  if (f.findBlock(sT.exitBlock)->successors().size() != 1 ||
      f.findBlock(sF.exitBlock)->successors().size() != 1)
    return MeldKind::NotMeldable;
  if (sT.isBlock && sF.isBlock) return MeldKind::BlockBlock;
  if (sT.isBlock != sF.isBlock) return MeldKind::BlockRegion;
  if (isomorphicSubgraphs(f, sT, sF, nullptr)) return MeldKind::RegionRegion;
  return MeldKind::NotMeldable;
}

bool isomorphicSubgraphs(const Function &fn, const SeseSubgraph &sT,
                         const SeseSubgraph &sF,
                         std::map<std::string, std::string> *mapping) {
  if (sT.blocks.size() != sF.blocks.size()) return false;
  std::map<std::string, std::string> fwd, rev;

  std::function<bool(const std::string &, const std::string &)> dfs =
      [&](const std::string &t, const std::string &ff) {
        auto it = fwd.find(t);
        if (it != fwd.end()) return it->second == ff;
        if (rev.count(ff)) return false;
        if (!sT.contains(t) || !sF.contains(ff)) return false;
        bool tExit = t == sT.exitBlock;
        bool fExit = ff == sF.exitBlock;
        if (tExit != fExit) return false;
        fwd[t] = ff;
        rev[ff] = t;
        if (tExit) return true;  // successors leave the subgraph
        const Instruction &tt = fn.findBlock(t)->terminator;
        const Instruction &ft = fn.findBlock(ff)->terminator;
        if (tt.op != ft.op) return false;
        auto ts = fn.findBlock(t)->successors();
        auto fs = fn.findBlock(ff)->successors();
        if (ts.size() != fs.size()) return false;
        for (size_t i = 0; i < ts.size(); ++i)
          if (!dfs(ts[i], fs[i])) return false;
        return true;
      };

  if (!dfs(sT.entry, sF.entry)) return false;
  if (fwd.size() != sT.blocks.size()) return false;
  if (mapping) *mapping = std::move(fwd);
  return true;
}

double mpBlock(const BasicBlock &b1, const BasicBlock &b2,
               const LatencyModel &lm) {
  std::map<Opcode, int64_t> f1, f2;
  auto profile = [](const BasicBlock &b, std::map<Opcode, int64_t> &freq) {
    for (size_t i = 0; i < b.phis.size(); ++i) freq[Opcode::Phi] += 1;
    for (const auto &i : b.body) freq[i.op] += 1;
    freq[b.terminator.op] += 1;
  };
  profile(b1, f1);
  profile(b2, f2);
  int64_t shared = 0;
  for (const auto &[op, n1] : f1) {
    auto it = f2.find(op);
    if (it == f2.end()) continue;
    shared += std::min(n1, it->second) * lm.latency(op);
  }
  return double(shared) / double(blockLatency(b1, lm) + blockLatency(b2, lm));
}

double mpSubgraph(const Function &f, const SeseSubgraph &s1,
                  const SeseSubgraph &s2,
                  const std::map<std::string, std::string> &mapping,
                  const LatencyModel &lm) {
  if (mapping.size() != s1.blocks.size() ||
      s1.blocks.size() != s2.blocks.size())
    throw std::runtime_error("subgraph mapping is not a bijection");
  double num = 0, den = 0;
  std::set<std::string> seen;
  for (const auto &b1name : s1.blocks) {
    auto it = mapping.find(b1name);
    if (it == mapping.end())
      throw std::runtime_error("subgraph mapping misses block '" + b1name +
                               "'");
    if (!s2.contains(it->second) || !seen.insert(it->second).second)
      throw std::runtime_error("subgraph mapping is not a bijection");
    const BasicBlock *b1 = f.findBlock(b1name);
    const BasicBlock *b2 = f.findBlock(it->second);
    double w = double(blockLatency(*b1, lm) + blockLatency(*b2, lm));
    num += w * mpBlock(*b1, *b2, lm);
    den += w;
  }
  return den == 0 ? 0.0 : num / den;
}

namespace {

bool isMemOp(Opcode op) {
  return op == Opcode::LoadShared || op == Opcode::StoreShared ||
         op == Opcode::LoadGlobal || op == Opcode::StoreGlobal;
}

bool meldCompatible(const Instruction &a, const Instruction &b) {
  if (a.op != b.op) return false;
  if (isMemOp(a.op) && a.operands[0].text != b.operands[0].text) return false;
  return true;
}

constexpr double kNegInf = -1e18;

}  // namespace

InstructionAlignment alignInstructions(const BasicBlock &bT,
                                       const BasicBlock &bF,
                                       const LatencyModel &lm,
                                       double gapPenalty) {
  const auto &a = bT.body;
  const auto &b = bF.body;
  size_t n = a.size(), m = b.size();
  // dp over prefixes; choice 0 = diagonal, 1 = true-side gap, 2 = false-side
  // gap. Tie order: match first, then consume the true side.
  std::vector<std::vector<double>> dp(n + 1, std::vector<double>(m + 1, 0));
  std::vector<std::vector<int>> choice(n + 1, std::vector<int>(m + 1, 0));
  for (size_t i = 1; i <= n; ++i) {
    dp[i][0] = dp[i - 1][0] + gapPenalty;
    choice[i][0] = 1;
  }
  for (size_t j = 1; j <= m; ++j) {
    dp[0][j] = dp[0][j - 1] + gapPenalty;
    choice[0][j] = 2;
  }
  for (size_t i = 1; i <= n; ++i) {
    for (size_t j = 1; j <= m; ++j) {
      double diag = meldCompatible(a[i - 1], b[j - 1])
                        ? dp[i - 1][j - 1] + double(lm.latency(a[i - 1].op))
                        : kNegInf;
      double up = dp[i - 1][j] + gapPenalty;
      double left = dp[i][j - 1] + gapPenalty;
      if (diag >= up && diag >= left) {
        dp[i][j] = diag;
        choice[i][j] = 0;
      } else if (up >= left) {
        dp[i][j] = up;
        choice[i][j] = 1;
      } else {
        dp[i][j] = left;
        choice[i][j] = 2;
      }
    }
  }
  InstructionAlignment out;
  out.score = dp[n][m];
  size_t i = n, j = m;
  std::vector<InstrAlignEntry> rev;
  while (i > 0 || j > 0) {
    int c = choice[i][j];
    if (c == 0) {
      rev.push_back({int(i - 1), int(j - 1)});
      --i;
      --j;
    } else if (c == 1) {
      rev.push_back({int(i - 1), -1});
      --i;
    } else {
      rev.push_back({-1, int(j - 1)});
      --j;
    }
  }
  out.entries.assign(rev.rbegin(), rev.rend());
  return out;
}

namespace {

double tupleScore(const Function &f, const SeseSubgraph &sT,
                  const SeseSubgraph &sF, MeldKind kind,
                  const LatencyModel &lm) {
  switch (kind) {
    case MeldKind::BlockBlock:
      return mpBlock(*f.findBlock(sT.entry), *f.findBlock(sF.entry), lm);
    case MeldKind::RegionRegion: {
      std::map<std::string, std::string> mapping;
      if (!isomorphicSubgraphs(f, sT, sF, &mapping)) return kNegInf;
      return mpSubgraph(f, sT, sF, mapping, lm);
    }
    case MeldKind::BlockRegion: {
      const SeseSubgraph &blockSide = sT.isBlock ? sT : sF;
      const SeseSubgraph &regionSide = sT.isBlock ? sF : sT;
      return planReplication(f, *f.findBlock(blockSide.entry), regionSide, lm)
          .score;
    }
    default:
      return kNegInf;
  }
}

}  // namespace

SubgraphAlignment alignSubgraphs(const Function &f,
                                 const std::vector<SeseSubgraph> &truePath,
                                 const std::vector<SeseSubgraph> &falsePath,
                                 const MeldConfig &cfg, const LatencyModel &lm) {
  size_t n = truePath.size(), m = falsePath.size();
  std::vector<std::vector<MeldKind>> kind(n, std::vector<MeldKind>(m));
  std::vector<std::vector<double>> score(n, std::vector<double>(m, kNegInf));
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = 0; j < m; ++j) {
      MeldKind k = classifyMeldable(f, truePath[i], falsePath[j]);
      if (cfg.branchFusionOnly && k != MeldKind::BlockBlock)
        k = MeldKind::NotMeldable;
      kind[i][j] = k;
      if (k != MeldKind::NotMeldable)
        score[i][j] = tupleScore(f, truePath[i], falsePath[j], k, lm);
    }
  }
  // Order-preserving matching; skipping a subgraph is free.
  std::vector<std::vector<double>> dp(n + 1, std::vector<double>(m + 1, 0));
  std::vector<std::vector<int>> choice(n + 1, std::vector<int>(m + 1, 0));
  for (size_t i = 1; i <= n; ++i) choice[i][0] = 1;
  for (size_t j = 1; j <= m; ++j) choice[0][j] = 2;
  for (size_t i = 1; i <= n; ++i) {
    for (size_t j = 1; j <= m; ++j) {
      double diag = score[i - 1][j - 1] > kNegInf / 2
                        ? dp[i - 1][j - 1] + score[i - 1][j - 1]
                        : kNegInf;
      double up = dp[i - 1][j];
      double left = dp[i][j - 1];
      if (diag >= up && diag >= left) {
        dp[i][j] = diag;
        choice[i][j] = 0;
      } else if (up >= left) {
        dp[i][j] = up;
        choice[i][j] = 1;
      } else {
        dp[i][j] = left;
        choice[i][j] = 2;
      }
    }
  }
  SubgraphAlignment out;
  out.total = dp[n][m];
  size_t i = n, j = m;
  std::vector<AlignedTuple> rev;
  while (i > 0 || j > 0) {
    int c = choice[i][j];
    AlignedTuple t;
    if (c == 0) {
      t.t = int(i - 1);
      t.f = int(j - 1);
      t.kind = kind[i - 1][j - 1];
      t.score = score[i - 1][j - 1];
      --i;
      --j;
    } else if (c == 1) {
      t.t = int(i - 1);
      --i;
    } else {
      t.f = int(j - 1);
      --j;
    }
    rev.push_back(t);
  }
  out.tuples.assign(rev.rbegin(), rev.rend());
  return out;
}

ReplicaPlan planReplication(const Function &f, const BasicBlock &b,
                            const SeseSubgraph &region, const LatencyModel &lm) {
  ReplicaPlan plan;
  // Partner choice: max MP_B against the block, ties to the earliest block
  // in pre-order.
  double best = -1;
  for (const auto &name : region.blocks) {
    double s = mpBlock(b, *f.findBlock(name), lm);
    if (s > best) {
      best = s;
      plan.slotRegionBlock = name;
    }
  }

  // Per-block reachability of the slot inside the region, used to concretize
  // branch conditions so execution always passes the slot.
  auto reachesSlot = [&](const std::string &from) {
    std::set<std::string> seen;
    std::vector<std::string> work{from};
    while (!work.empty()) {
      std::string x = work.back();
      work.pop_back();
      if (!region.contains(x) || !seen.insert(x).second) continue;
      if (x == plan.slotRegionBlock) return true;
      if (x == region.exitBlock) continue;
      for (const auto &s : f.findBlock(x)->successors()) work.push_back(s);
    }
    return false;
  };

  std::set<std::string> used;
  std::map<std::string, std::string> regionToReplica;
  auto replicaName = [&](const std::string &regionBlock) {
    auto it = regionToReplica.find(regionBlock);
    if (it != regionToReplica.end()) return it->second;
    std::string base = regionBlock + ".r";
    std::string name = base;
    int n = 1;
    while (used.count(name) || f.findBlock(name) != nullptr)
      name = base + std::to_string(n++);
    used.insert(name);
    regionToReplica[regionBlock] = name;
    return name;
  };

  for (const auto &name : region.blocks) {
    const BasicBlock *src = f.findBlock(name);
    BasicBlock rb;
    rb.name = replicaName(name);
    if (name == plan.slotRegionBlock) {
      rb.phis = b.phis;
      rb.body = b.body;
      plan.slotReplicaBlock = rb.name;
    }
    const Instruction &t = src->terminator;
    if (name == region.exitBlock) {
      // Target is fixed up when the replica is spliced in.
      rb.terminator.op = Opcode::Br;
      rb.terminator.operands.push_back(Operand::label(""));
    } else if (t.op == Opcode::Br) {
      rb.terminator.op = Opcode::Br;
      rb.terminator.operands.push_back(
          Operand::label(replicaName(t.operands[0].text)));
    } else {
      // condbr: steer towards the slot when it is still ahead, otherwise any
      // path to the exit works.
      int32_t steer = 1;
      if (!reachesSlot(t.operands[1].text) && reachesSlot(t.operands[2].text))
        steer = 0;
      rb.terminator.op = Opcode::CondBr;
      rb.terminator.operands = {Operand::immediate(steer),
                                Operand::label(replicaName(t.operands[1].text)),
                                Operand::label(replicaName(t.operands[2].text))};
    }
    plan.blocks.push_back(std::move(rb));
    plan.mapping[plan.blocks.back().name] = name;
  }

  double num = 0, den = 0;
  for (const auto &rb : plan.blocks) {
    const BasicBlock *m = f.findBlock(plan.mapping.at(rb.name));
    double w = double(blockLatency(rb, lm) + blockLatency(*m, lm));
    num += w * mpBlock(rb, *m, lm);
    den += w;
  }
  plan.score = den == 0 ? 0.0 : num / den;
  return plan;
}

}  // namespace darm
