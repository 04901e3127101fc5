#include <stdexcept>

#include "darm/dominators.hpp"
#include "darm/melding.hpp"

namespace darm {

namespace {

struct PreparedRegion {
  MeldableDivergentRegion region;
  std::vector<SeseSubgraph> truePath;
  std::vector<SeseSubgraph> falsePath;
};

// Re-derives the region for `entry` against the current function state (an
// earlier simplification or meld may have moved its extent), simplifies it
// and decomposes both paths.
bool prepareRegion(Function &f, const std::string &entry, PreparedRegion &out) {
  DivergenceInfo div = analyzeDivergence(f);
  auto fresh = detectMeldableRegions(f, div);
  const MeldableDivergentRegion *r = nullptr;
  for (const auto &x : fresh)
    if (x.entry == entry) r = &x;
  if (!r) return false;
  out.region = *r;
  simplifyRegion(f, out.region.entry, out.region.exit);
  DomTree dom = computeDominators(f);
  DomTree pdom = computePostDominators(f);
  const BasicBlock *eb = f.findBlock(out.region.entry);
  std::string te = eb->terminator.operands[1].text;
  std::string fe = eb->terminator.operands[2].text;
  out.region.truePathEntry = te;
  out.region.falsePathEntry = fe;
  out.truePath = decomposePath(f, te, out.region.exit, dom, pdom);
  out.falsePath = decomposePath(f, fe, out.region.exit, dom, pdom);
  return true;
}

bool diamondOnly(const PreparedRegion &p) {
  return p.truePath.size() == 1 && p.falsePath.size() == 1 &&
         p.truePath[0].isBlock && p.falsePath[0].isBlock;
}

void checkConfig(const MeldConfig &cfg) {
  if (cfg.threshold < 0.0 || cfg.threshold > 0.5)
    throw std::invalid_argument("threshold must lie in [0, 0.5]");
  if (cfg.maxIterations < 1)
    throw std::invalid_argument("maxIterations must be positive");
}

}  // namespace

MeldReport runDarm(Function &f, const MeldConfig &cfg, const LatencyModel &lm) {
  checkConfig(cfg);
  MeldReport rep;
  rep.function = f.name;
  for (int iter = 1; iter <= cfg.maxIterations; ++iter) {
    rep.iterations = iter;
    bool melded = false;
    auto regions = detectMeldableRegions(f, analyzeDivergence(f));
    for (const auto &r0 : regions) {
      PreparedRegion p;
      if (!prepareRegion(f, r0.entry, p)) continue;
      if (cfg.branchFusionOnly && !diamondOnly(p)) continue;
      auto align = alignSubgraphs(f, p.truePath, p.falsePath, cfg, lm);
      for (const auto &t : align.tuples) {
        if (t.t < 0 || t.f < 0 || t.kind == MeldKind::NotMeldable) continue;
        if (t.score < cfg.threshold) continue;
        MeldOutcome oc =
            meldSubgraphs(f, p.truePath[t.t], p.falsePath[t.f],
                          p.region.condition, t.kind, cfg, lm);
        postOptimize(f);
        MeldAction a;
        a.regionEntry = p.region.entry;
        a.regionExit = p.region.exit;
        a.kind = meldKindName(t.kind);
        a.mpScore = t.score;
        a.iteration = iter;
        a.blocksMelded = static_cast<int>(oc.meldedBlocks.size());
        a.selectsInserted = oc.selectsInserted;
        a.unpredicatedRuns = oc.unpredicatedRuns;
        rep.melds.push_back(a);
        melded = true;
        break;
      }
      if (melded) break;
    }
    if (!melded) {
      rep.converged = true;
      return rep;
    }
    if (cfg.runOnce) {
      rep.converged = true;
      return rep;
    }
  }
  rep.converged = false;
  return rep;
}

std::vector<CandidateTuple> firstIterationCandidates(const Function &fin,
                                                     const MeldConfig &cfg,
                                                     const LatencyModel &lm) {
  checkConfig(cfg);
  Function f = fin;
  std::vector<CandidateTuple> out;
  auto regions = detectMeldableRegions(f, analyzeDivergence(f));
  for (const auto &r0 : regions) {
    PreparedRegion p;
    if (!prepareRegion(f, r0.entry, p)) continue;
    if (cfg.branchFusionOnly && !diamondOnly(p)) continue;
    auto align = alignSubgraphs(f, p.truePath, p.falsePath, cfg, lm);
    for (const auto &t : align.tuples) {
      if (t.t < 0 || t.f < 0 || t.kind == MeldKind::NotMeldable) continue;
      if (t.score < cfg.threshold) continue;
      CandidateTuple c;
      c.regionEntry = p.region.entry;
      c.regionExit = p.region.exit;
      c.trueEntry = p.truePath[t.t].entry;
      c.falseEntry = p.falsePath[t.f].entry;
      c.kind = meldKindName(t.kind);
      c.score = t.score;
      out.push_back(c);
    }
  }
  return out;
}

}  // namespace darm
