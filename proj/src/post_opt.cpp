#include <algorithm>
#include <deque>

#include "darm/dominators.hpp"
#include "darm/melding.hpp"

namespace darm {

namespace {

void replaceAllUses(Function &f, const std::string &from, const Operand &to) {
  for (auto &b : f.blocks) {
    for (auto &phi : b.phis)
      for (auto &[v, p] : phi.incomings)
        if (v.isValue() && v.text == from) v = to;
    for (auto &ins : b.body)
      for (auto &o : ins.operands)
        if (o.isValue() && o.text == from) o = to;
    for (auto &o : b.terminator.operands)
      if (o.isValue() && o.text == from) o = to;
  }
}

bool removeUnreachable(Function &f) {
  if (f.blocks.empty()) return false;
  std::set<std::string> live;
  std::deque<std::string> work{f.blocks.front().name};
  while (!work.empty()) {
    std::string b = work.front();
    work.pop_front();
    if (!live.insert(b).second) continue;
    for (const auto &s : f.findBlock(b)->successors()) work.push_back(s);
  }
  bool changed = false;
  if (live.size() != f.blocks.size()) {
    std::vector<BasicBlock> kept;
    for (auto &b : f.blocks)
      if (live.count(b.name)) kept.push_back(std::move(b));
    f.blocks = std::move(kept);
    changed = true;
  }
  // Drop phi incomings from edges that no longer exist.
  auto preds = f.predecessors();
  for (auto &b : f.blocks) {
    std::set<std::string> ps(preds[b.name].begin(), preds[b.name].end());
    for (auto &phi : b.phis) {
      size_t before = phi.incomings.size();
      phi.incomings.erase(
          std::remove_if(phi.incomings.begin(), phi.incomings.end(),
                         [&](const std::pair<Operand, std::string> &in) {
                           return !ps.count(in.second);
                         }),
          phi.incomings.end());
      changed |= phi.incomings.size() != before;
    }
  }
  return changed;
}

bool foldBranches(Function &f) {
  bool changed = false;
  for (auto &b : f.blocks) {
    if (b.terminator.op != Opcode::CondBr) continue;
    if (b.terminator.operands[1].text != b.terminator.operands[2].text)
      continue;
    Operand target = b.terminator.operands[1];
    b.terminator.op = Opcode::Br;
    b.terminator.operands = {target};
    changed = true;
  }
  return changed;
}

bool foldPhis(Function &f) {
  DomTree dom = computeDominators(f);
  std::map<std::string, std::string> defBlock;
  for (const auto &b : f.blocks) {
    for (const auto &p : b.phis) defBlock[p.result] = b.name;
    for (const auto &i : b.body)
      if (!i.result.empty()) defBlock[i.result] = b.name;
  }
  bool changed = false;
  for (auto &b : f.blocks) {
    for (size_t i = 0; i < b.phis.size();) {
      PhiNode &phi = b.phis[i];
      bool fold = false;
      Operand val;
      if (phi.incomings.size() == 1) {
        fold = true;
        val = phi.incomings[0].first;
      } else if (!phi.incomings.empty()) {
        bool allSame = true;
        for (const auto &[v, p] : phi.incomings)
          if (!(v == phi.incomings[0].first)) allSame = false;
        if (allSame) {
          val = phi.incomings[0].first;
          if (!val.isValue()) {
            fold = true;
          } else {
            auto it = defBlock.find(val.text);
            // Parameters dominate everything; otherwise the definition must
            // dominate this block.
            fold = it == defBlock.end() || dom.dominates(it->second, b.name);
          }
        }
      }
      if (!fold) {
        ++i;
        continue;
      }
      std::string name = phi.result;
      b.phis.erase(b.phis.begin() + i);
      replaceAllUses(f, name, val);
      changed = true;
    }
  }
  return changed;
}

bool dedupPhis(Function &f) {
  bool changed = false;
  for (auto &b : f.blocks) {
    for (size_t i = 0; i < b.phis.size(); ++i) {
      auto key = [](const PhiNode &p) {
        auto in = p.incomings;
        std::sort(in.begin(), in.end(),
                  [](const auto &a, const auto &c) { return a.second < c.second; });
        return in;
      };
      auto ki = key(b.phis[i]);
      for (size_t j = i + 1; j < b.phis.size();) {
        if (key(b.phis[j]) == ki) {
          std::string dup = b.phis[j].result;
          Operand keepv = Operand::value(b.phis[i].result);
          b.phis.erase(b.phis.begin() + j);
          replaceAllUses(f, dup, keepv);
          changed = true;
        } else {
          ++j;
        }
      }
    }
  }
  return changed;
}

bool removeEmptyForwarding(Function &f) {
  auto preds = f.predecessors();
  for (size_t i = 1; i < f.blocks.size(); ++i) {
    BasicBlock &b = f.blocks[i];
    if (!b.phis.empty() || !b.body.empty()) continue;
    if (b.terminator.op != Opcode::Br) continue;
    std::string succ = b.terminator.operands[0].text;
    if (succ == b.name) continue;
    const auto &bp = preds[b.name];
    if (bp.empty()) continue;  // unreachable pass owns this
    // Re-keying the successor's phi incomings must not collide with an edge
    // that already exists.
    std::set<std::string> sp(preds[succ].begin(), preds[succ].end());
    bool conflict = false;
    for (const auto &p : bp)
      if (sp.count(p)) conflict = true;
    // A duplicate edge is only a problem when the successor keys phis by
    // predecessor; otherwise the branch folds on the next round.
    if (conflict && !f.findBlock(succ)->phis.empty()) continue;
    for (const auto &p : bp)
      for (auto &o : f.findBlock(p)->terminator.operands)
        if (o.isLabel() && o.text == b.name) o.text = succ;
    BasicBlock *sb = f.findBlock(succ);
    for (auto &phi : sb->phis) {
      std::vector<std::pair<Operand, std::string>> next;
      for (auto &[v, p] : phi.incomings) {
        if (p != b.name) {
          next.emplace_back(v, p);
          continue;
        }
        for (const auto &np : bp) next.emplace_back(v, np);
      }
      phi.incomings = std::move(next);
    }
    f.blocks.erase(f.blocks.begin() + i);
    return true;
  }
  return false;
}

bool mergeStraightLine(Function &f) {
  auto preds = f.predecessors();
  for (auto &a : f.blocks) {
    if (a.terminator.op != Opcode::Br) continue;
    std::string bn = a.terminator.operands[0].text;
    if (bn == a.name || bn == f.blocks.front().name) continue;
    const auto &bp = preds[bn];
    if (bp.size() != 1 || bp.front() != a.name) continue;
    BasicBlock *b = f.findBlock(bn);
    if (!b->phis.empty()) continue;
    for (auto &ins : b->body) a.body.push_back(std::move(ins));
    a.terminator = b->terminator;
    for (auto &blk : f.blocks)
      for (auto &phi : blk.phis)
        for (auto &[v, p] : phi.incomings)
          if (p == bn) p = a.name;
    f.blocks.erase(f.blocks.begin() + f.blockIndex(bn));
    return true;
  }
  return false;
}

bool hasSideEffects(const Instruction &ins) {
  switch (ins.op) {
    case Opcode::Div:
    case Opcode::Rem:
    case Opcode::LoadShared:
    case Opcode::LoadGlobal:
    case Opcode::StoreShared:
    case Opcode::StoreGlobal:
    case Opcode::Barrier:
      return true;  // faults are observable
    default:
      return false;
  }
}

bool deadCode(Function &f) {
  std::set<std::string> used;
  for (const auto &b : f.blocks) {
    for (const auto &phi : b.phis)
      for (const auto &[v, p] : phi.incomings)
        if (v.isValue()) used.insert(v.text);
    for (const auto &ins : b.body)
      for (const auto &o : ins.operands)
        if (o.isValue()) used.insert(o.text);
    for (const auto &o : b.terminator.operands)
      if (o.isValue()) used.insert(o.text);
  }
  bool changed = false;
  for (auto &b : f.blocks) {
    size_t before = b.body.size();
    b.body.erase(std::remove_if(b.body.begin(), b.body.end(),
                                [&](const Instruction &ins) {
                                  return !ins.result.empty() &&
                                         !used.count(ins.result) &&
                                         !hasSideEffects(ins);
                                }),
                 b.body.end());
    changed |= b.body.size() != before;
    size_t pb = b.phis.size();
    b.phis.erase(std::remove_if(b.phis.begin(), b.phis.end(),
                                [&](const PhiNode &p) {
                                  return !used.count(p.result);
                                }),
                 b.phis.end());
    changed |= b.phis.size() != pb;
  }
  return changed;
}

}  // namespace

bool postOptimize(Function &f) {
  bool any = false;
  for (;;) {
    bool c = false;
    c |= removeUnreachable(f);
    c |= foldBranches(f);
    c |= foldPhis(f);
    c |= dedupPhis(f);
    c |= removeEmptyForwarding(f);
    c |= mergeStraightLine(f);
    c |= deadCode(f);
    if (!c) break;
    any = true;
  }
  return any;
}

}  // namespace darm
