#include "darm/verifier.hpp"

#include <functional>
#include <map>
#include <set>

#include "darm/dominators.hpp"

namespace darm {

namespace {

struct DefSite {
  std::string block;
  // Position within the block; phis all share position -1 since they execute
  // on edge entry.
  int pos = -1;
};

}  // namespace

std::vector<SsaViolation> verifySsa(const Function &f) {
  std::vector<SsaViolation> out;
  auto bad = [&](const std::string &block, const std::string &value,
                 const std::string &msg) {
    out.push_back({block, value, msg});
  };

  if (f.blocks.empty()) {
    bad("", "", "function has no blocks");
    return out;
  }

  // Block name uniqueness and label references.
  std::set<std::string> blockNames;
  for (const auto &b : f.blocks) {
    if (!blockNames.insert(b.name).second)
      bad(b.name, "", "duplicate block name");
    if (!isTerminator(b.terminator.op))
      bad(b.name, "", "block does not end in a terminator");
  }
  for (const auto &b : f.blocks) {
    for (const auto &s : b.successors())
      if (!blockNames.count(s))
        bad(b.name, "", "branch to unknown block '^" + s + "'");
    for (const auto &p : b.phis)
      for (const auto &[v, pred] : p.incomings)
        if (!blockNames.count(pred))
          bad(b.name, p.result, "phi references unknown block '^" + pred + "'");
  }
  if (!out.empty()) return out;

  auto preds = f.predecessors();
  if (!preds[f.entry().name].empty())
    bad(f.entry().name, "", "entry block has predecessors");

  // Reachability.
  std::set<std::string> reachable;
  std::function<void(const std::string &)> dfs = [&](const std::string &n) {
    if (!reachable.insert(n).second) return;
    for (const auto &s : f.findBlock(n)->successors()) dfs(s);
  };
  dfs(f.entry().name);
  for (const auto &b : f.blocks)
    if (!reachable.count(b.name)) bad(b.name, "", "unreachable block");
  if (!out.empty()) return out;

  // Unique definitions.
  std::map<std::string, DefSite> defs;
  std::set<std::string> params(f.params.begin(), f.params.end());
  for (const auto &b : f.blocks) {
    for (const auto &p : b.phis) {
      if (params.count(p.result) || defs.count(p.result))
        bad(b.name, p.result, "value defined more than once");
      else
        defs[p.result] = {b.name, -1};
    }
    for (size_t i = 0; i < b.body.size(); ++i) {
      const auto &inst = b.body[i];
      if (inst.result.empty()) continue;
      if (params.count(inst.result) || defs.count(inst.result))
        bad(b.name, inst.result, "value defined more than once");
      else
        defs[inst.result] = {b.name, static_cast<int>(i)};
    }
  }

  // Phi incomings match predecessors exactly.
  for (const auto &b : f.blocks) {
    std::set<std::string> predSet(preds[b.name].begin(), preds[b.name].end());
    for (const auto &p : b.phis) {
      std::set<std::string> seen;
      for (const auto &[v, pred] : p.incomings) {
        if (!seen.insert(pred).second)
          bad(b.name, p.result, "phi has duplicate incoming for '^" + pred + "'");
        if (!predSet.count(pred))
          bad(b.name, p.result,
              "phi incoming from non-predecessor '^" + pred + "'");
      }
      for (const auto &pd : predSet)
        if (!seen.count(pd))
          bad(b.name, p.result, "phi missing incoming for '^" + pd + "'");
    }
  }

  DomTree dom = computeDominators(f);

  // A def at (db, dpos) dominates a use at (ub, upos).
  auto defDominatesUse = [&](const DefSite &d, const std::string &ub,
                             int upos) {
    if (d.block == ub) return d.pos < upos;
    return dom.strictlyDominates(d.block, ub);
  };

  auto checkUse = [&](const Operand &o, const std::string &ub, int upos,
                      const std::string &user) {
    if (!o.isValue()) return;
    if (params.count(o.text)) return;
    auto it = defs.find(o.text);
    if (it == defs.end()) {
      bad(ub, o.text, "use of undefined value in '" + user + "'");
      return;
    }
    if (!defDominatesUse(it->second, ub, upos))
      bad(ub, o.text, "definition does not dominate use in '" + user + "'");
  };

  for (const auto &b : f.blocks) {
    for (const auto &p : b.phis) {
      // A phi use must be available at the end of the incoming edge.
      for (const auto &[v, pred] : p.incomings) {
        if (!v.isValue() || params.count(v.text)) continue;
        auto it = defs.find(v.text);
        if (it == defs.end()) {
          bad(b.name, v.text, "use of undefined value in phi '" + p.result + "'");
          continue;
        }
        const auto &d = it->second;
        if (!(d.block == pred || dom.strictlyDominates(d.block, pred)))
          bad(b.name, v.text,
              "phi incoming from '^" + pred + "' not dominated by definition");
      }
    }
    for (size_t i = 0; i < b.body.size(); ++i)
      for (const auto &o : b.body[i].operands)
        checkUse(o, b.name, static_cast<int>(i),
                 b.body[i].result.empty() ? opcodeName(b.body[i].op)
                                          : b.body[i].result);
    for (const auto &o : b.terminator.operands)
      checkUse(o, b.name, static_cast<int>(b.body.size()),
               opcodeName(b.terminator.op));
  }

  return out;
}

std::vector<SsaViolation> verifyModule(const Module &m) {
  std::vector<SsaViolation> out;
  for (const auto &f : m.functions) {
    auto v = verifySsa(f);
    out.insert(out.end(), v.begin(), v.end());
  }
  return out;
}

}  // namespace darm
