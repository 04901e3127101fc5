#include "darm/divergence.hpp"

#include <map>
#include <vector>

#include "darm/dominators.hpp"

namespace darm {

DivergenceInfo analyzeDivergence(const Function &f) {
  DivergenceInfo info;
  DomTree dom = computeDominators(f);
  auto frontiers = dominanceFrontiers(f, dom);

  auto operandDivergent = [&](const Operand &o) {
    return o.isValue() && info.valueDivergent(o.text);
  };

  bool changed = true;
  while (changed) {
    changed = false;
    // Blocks control-dependent on a divergent branch; phis there are
    // sync-dependent.
    std::set<std::string> syncBlocks;
    for (const auto &br : info.divergentBranches) {
      auto it = frontiers.find(br);
      if (it == frontiers.end()) continue;
      for (const auto &b : it->second) syncBlocks.insert(b);
    }
    for (const auto &b : f.blocks) {
      for (const auto &p : b.phis) {
        if (info.valueDivergent(p.result)) continue;
        bool div = syncBlocks.count(b.name) > 0;
        for (const auto &[v, pred] : p.incomings)
          if (operandDivergent(v)) div = true;
        if (div) {
          info.divergentValues.insert(p.result);
          changed = true;
        }
      }
      for (const auto &i : b.body) {
        if (i.result.empty() || info.valueDivergent(i.result)) continue;
        bool div = i.op == Opcode::Tid;
        for (const auto &o : i.operands)
          if (operandDivergent(o)) div = true;
        if (div) {
          info.divergentValues.insert(i.result);
          changed = true;
        }
      }
      if (b.terminator.op == Opcode::CondBr &&
          operandDivergent(b.terminator.operands[0]) &&
          !info.branchDivergent(b.name)) {
        info.divergentBranches.insert(b.name);
        changed = true;
      }
    }
  }
  return info;
}

}  // namespace darm
