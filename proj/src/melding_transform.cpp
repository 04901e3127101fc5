#include <algorithm>
#include <functional>
#include <stdexcept>

#include "darm/dominators.hpp"
#include "darm/melding.hpp"

namespace darm {

namespace {

// Fresh-name helpers that stay unique across repeated calls before the new
// definitions are inserted into the function.
class NameSource {
 public:
  explicit NameSource(const Function &f) : f_(f) {
    for (const auto &v : f.definedValues()) values_.insert(v);
    for (const auto &p : f.params) values_.insert(p);
    for (const auto &b : f.blocks) blocks_.insert(b.name);
  }
  std::string value(const std::string &base) {
    return pick(values_, base);
  }
  std::string block(const std::string &base) {
    return pick(blocks_, base);
  }

 private:
  std::string pick(std::set<std::string> &used, const std::string &base) {
    std::string n = base;
    int k = 1;
    while (used.count(n)) n = base + std::to_string(k++);
    used.insert(n);
    return n;
  }
  const Function &f_;
  std::set<std::string> values_;
  std::set<std::string> blocks_;
};

std::map<std::string, std::string> valueDefBlocks(const Function &f) {
  std::map<std::string, std::string> out;
  for (const auto &b : f.blocks) {
    for (const auto &p : b.phis) out[p.result] = b.name;
    for (const auto &i : b.body)
      if (!i.result.empty()) out[i.result] = b.name;
  }
  return out;
}

bool usedOutsideBlock(const Function &f, const std::string &v,
                      const std::string &block) {
  for (const auto &b : f.blocks) {
    if (b.name == block) continue;
    for (const auto &p : b.phis)
      for (const auto &[val, pred] : p.incomings)
        if (val.isValue() && val.text == v) return true;
    for (const auto &i : b.body)
      for (const auto &o : i.operands)
        if (o.isValue() && o.text == v) return true;
    for (const auto &o : b.terminator.operands)
      if (o.isValue() && o.text == v) return true;
  }
  return false;
}

std::string operandKey(const Operand &o) {
  switch (o.kind) {
    case Operand::Kind::Value: return "v:" + o.text;
    case Operand::Kind::Imm: return "i:" + std::to_string(o.imm);
    case Operand::Kind::Undef: return "u";
    case Operand::Kind::Label: return "l:" + o.text;
    case Operand::Kind::Mem: return "m:" + o.text;
  }
  return "?";
}

}  // namespace

void repairSsa(Function &f, const std::string &value,
               const std::string &defBlock) {
  DomTree dom = computeDominators(f);
  auto frontiers = dominanceFrontiers(f, dom);
  std::set<std::string> idf;
  std::vector<std::string> work{defBlock};
  while (!work.empty()) {
    std::string x = work.back();
    work.pop_back();
    for (const auto &y : frontiers[x])
      if (idf.insert(y).second) work.push_back(y);
  }
  if (idf.empty()) return;

  NameSource names(f);
  std::map<std::string, std::string> phiName;
  for (const auto &y : idf) phiName[y] = names.value(value + ".phi");

  std::function<Operand(const std::string &)> defOut =
      [&](const std::string &b) -> Operand {
    if (b == defBlock) return Operand::value(value);
    auto it = phiName.find(b);
    if (it != phiName.end()) return Operand::value(it->second);
    std::string ib = dom.idom(b);
    if (ib.empty()) return Operand::undef();
    return defOut(ib);
  };
  auto defIn = [&](const std::string &b) -> Operand {
    auto it = phiName.find(b);
    if (it != phiName.end()) return Operand::value(it->second);
    std::string ib = dom.idom(b);
    if (ib.empty()) return Operand::undef();
    return defOut(ib);
  };

  auto preds = f.predecessors();
  for (auto &blk : f.blocks) {
    for (auto &phi : blk.phis)
      for (auto &[v, p] : phi.incomings)
        if (v.isValue() && v.text == value) v = defOut(p);
    if (blk.name == defBlock) continue;
    Operand r = defIn(blk.name);
    for (auto &ins : blk.body)
      for (auto &o : ins.operands)
        if (o.isValue() && o.text == value) o = r;
    for (auto &o : blk.terminator.operands)
      if (o.isValue() && o.text == value) o = r;
  }
  for (const auto &y : idf) {
    PhiNode ph;
    ph.result = phiName[y];
    for (const auto &p : preds[y]) ph.incomings.emplace_back(defOut(p), p);
    f.findBlock(y)->phis.push_back(ph);
  }
}

bool preprocessSubgraphs(Function &f, const SeseSubgraph &sT,
                         const SeseSubgraph &sF, const Operand &cond) {
  DomTree dom = computeDominators(f);
  auto defBlocks = valueDefBlocks(f);

  auto inEither = [&](const std::string &b) {
    return sT.contains(b) || sF.contains(b);
  };

  // Values defined inside a subgraph and used outside it, in definition
  // order.
  std::vector<std::pair<std::string, bool>> outward;  // (value, onTrueSide)
  for (int side = 0; side < 2; ++side) {
    const SeseSubgraph &s = side == 0 ? sT : sF;
    for (const auto &bn : s.blocks) {
      const BasicBlock *b = f.findBlock(bn);
      auto consider = [&](const std::string &v) {
        if (v.empty()) return;
        for (const auto &blk : f.blocks) {
          if (s.contains(blk.name)) continue;
          for (const auto &p : blk.phis)
            for (const auto &[val, pred] : p.incomings)
              if (val.isValue() && val.text == v) {
                outward.emplace_back(v, side == 0);
                return;
              }
          for (const auto &i : blk.body)
            for (const auto &o : i.operands)
              if (o.isValue() && o.text == v) {
                outward.emplace_back(v, side == 0);
                return;
              }
          for (const auto &o : blk.terminator.operands)
            if (o.isValue() && o.text == v) {
              outward.emplace_back(v, side == 0);
              return;
            }
        }
      };
      for (const auto &p : b->phis) consider(p.result);
      for (const auto &i : b->body) consider(i.result);
    }
  }
  if (outward.empty()) return false;

  std::string exitT = sT.exitBlock, exitF = sF.exitBlock;
  std::string succT = f.findBlock(exitT)->successors().front();
  std::string succF = f.findBlock(exitF)->successors().front();

  NameSource names(f);
  std::string pName = names.block("p");
  BasicBlock P;
  P.name = pName;

  std::map<std::string, std::string> routed;  // inside value -> P phi
  for (const auto &[v, onTrue] : outward) {
    std::string m = names.value(v + ".m");
    PhiNode ph;
    ph.result = m;
    if (onTrue)
      ph.incomings = {{Operand::value(v), exitT}, {Operand::undef(), exitF}};
    else
      ph.incomings = {{Operand::undef(), exitT}, {Operand::value(v), exitF}};
    P.phis.push_back(ph);
    routed[v] = m;
  }

  auto dominatesBothExits = [&](const Operand &o) {
    if (!o.isValue()) return true;
    auto it = defBlocks.find(o.text);
    if (it == defBlocks.end()) return true;  // parameter
    return dom.dominates(it->second, exitT) && dom.dominates(it->second, exitF);
  };

  // Successor phis fed by the exits now come in through P. Values that do
  // not dominate both exits get their own routing phi in P.
  auto routeIncoming = [&](const Operand &v, bool fromTrue) -> Operand {
    if (v.isValue() && routed.count(v.text))
      return Operand::value(routed[v.text]);
    if (dominatesBothExits(v)) return v;
    std::string m = names.value((v.isValue() ? v.text : "in") + ".m");
    PhiNode ph;
    ph.result = m;
    if (fromTrue)
      ph.incomings = {{v, exitT}, {Operand::undef(), exitF}};
    else
      ph.incomings = {{Operand::undef(), exitT}, {v, exitF}};
    P.phis.push_back(ph);
    return Operand::value(m);
  };

  std::set<std::string> succs{succT, succF};
  for (const auto &sn : succs) {
    BasicBlock *sb = f.findBlock(sn);
    for (auto &phi : sb->phis) {
      const Operand *vT = nullptr, *vF = nullptr;
      for (auto &[v, p] : phi.incomings) {
        if (sn == succT && p == exitT) vT = &v;
        if (sn == succF && p == exitF) vF = &v;
      }
      if (vT && vF) {
        // Both exits fed this phi; merge the two incomings in P.
        std::string m = names.value(phi.result + ".m");
        PhiNode ph;
        ph.result = m;
        ph.incomings = {{*vT, exitT}, {*vF, exitF}};
        P.phis.push_back(ph);
        std::vector<std::pair<Operand, std::string>> kept;
        for (auto &in : phi.incomings)
          if (in.second != exitT && in.second != exitF) kept.push_back(in);
        kept.emplace_back(Operand::value(m), pName);
        phi.incomings = kept;
      } else if (vT || vF) {
        Operand nv = routeIncoming(vT ? *vT : *vF, vT != nullptr);
        for (auto &in : phi.incomings)
          if (in.second == (vT ? exitT : exitF)) {
            in.first = nv;
            in.second = pName;
          }
      }
    }
  }

  // Remaining outward uses.
  for (auto &blk : f.blocks) {
    if (inEither(blk.name)) continue;
    for (auto &ins : blk.body)
      for (auto &o : ins.operands)
        if (o.isValue() && routed.count(o.text)) o = Operand::value(routed[o.text]);
    for (auto &o : blk.terminator.operands)
      if (o.isValue() && routed.count(o.text)) o = Operand::value(routed[o.text]);
    for (auto &phi : blk.phis)
      for (auto &[v, p] : phi.incomings)
        if (p != pName && v.isValue() && routed.count(v.text))
          v = Operand::value(routed[v.text]);
  }

  if (succT == succF) {
    P.terminator.op = Opcode::Br;
    P.terminator.operands = {Operand::label(succT)};
  } else {
    P.terminator.op = Opcode::CondBr;
    P.terminator.operands = {cond, Operand::label(succT),
                             Operand::label(succF)};
  }
  for (auto &o : f.findBlock(exitT)->terminator.operands)
    if (o.isLabel() && o.text == succT) o.text = pName;
  for (auto &o : f.findBlock(exitF)->terminator.operands)
    if (o.isLabel() && o.text == succF) o.text = pName;

  int idx = f.blockIndex(exitF);
  f.blocks.insert(f.blocks.begin() + idx + 1, std::move(P));
  return true;
}

namespace {

enum Side { kBoth = 0, kTrueOnly = 1, kFalseOnly = 2 };

struct MeldedBlockInfo {
  std::vector<int> tags;                         // per body instruction
  std::vector<std::vector<Operand>> falseOps;    // operands of the false twin
  std::vector<int> phiSides;                     // per phi: 1 true, 2 false
  std::vector<Operand> falseTermOps;             // condbr condition twin
  bool pairedTerm = false;
};

struct Melder {
  Function &fn;
  const SeseSubgraph &sT;
  const SeseSubgraph &sF;
  Operand cond;
  const MeldConfig &cfg;
  const LatencyModel &lm;
  std::map<std::string, std::string> mapping;  // T block -> F block

  NameSource names;
  std::map<std::string, std::string> mT, mF;  // orig block -> melded name
  std::string btName, bfName;
  std::string predT, predF, succT, succF;
  std::map<std::string, std::string> operandMap;  // F value -> melded value
  std::set<std::string> meldedValues;
  std::map<std::string, std::string> entryPhis;  // key: side:value
  std::vector<BasicBlock> melded;
  std::map<std::string, MeldedBlockInfo> info;  // by melded name
  std::map<std::string, std::string> defBlocks;
  DomTree dom;
  int selects = 0;

  Melder(Function &f, const SeseSubgraph &st, const SeseSubgraph &sf,
         const Operand &c, const std::map<std::string, std::string> &map,
         const MeldConfig &config, const LatencyModel &lat)
      : fn(f), sT(st), sF(sf), cond(c), cfg(config), lm(lat), mapping(map),
        names(f), defBlocks(valueDefBlocks(f)), dom(computeDominators(f)) {}

  void computeBoundary() {
    auto preds = fn.predecessors();
    std::vector<std::string> pt, pf;
    for (const auto &p : preds[sT.entry])
      if (!sT.contains(p)) pt.push_back(p);
    for (const auto &p : preds[sF.entry])
      if (!sF.contains(p)) pf.push_back(p);
    if (pt.size() != 1 || pf.size() != 1)
      throw std::runtime_error("subgraph entries not simplified");
    predT = pt.front();
    predF = pf.front();
    succT = fn.findBlock(sT.exitBlock)->successors().front();
    succF = fn.findBlock(sF.exitBlock)->successors().front();
  }

  bool dominatesBothPreds(const Operand &o) {
    if (!o.isValue()) return true;
    auto it = defBlocks.find(o.text);
    if (it == defBlocks.end()) return true;  // parameter
    return dom.dominates(it->second, predT) && dom.dominates(it->second, predF);
  }

  Operand resolve(const Operand &o, int side) {
    if (!o.isValue()) return o;
    std::string name = o.text;
    if (side == kFalseOnly) {
      auto it = operandMap.find(name);
      if (it != operandMap.end()) name = it->second;
    }
    if (meldedValues.count(name)) return Operand::value(name);
    Operand r = Operand::value(name);
    if (dominatesBothPreds(r)) return r;
    return entryPhi(name, side);
  }

  Operand entryPhi(const std::string &name, int side) {
    std::string key = std::to_string(side) + ":" + name;
    auto it = entryPhis.find(key);
    if (it != entryPhis.end()) return Operand::value(it->second);
    if (predT == predF)
      throw std::logic_error("entry phi needed but predecessors coincide");
    std::string res = names.value(name + ".e");
    PhiNode ph;
    ph.result = res;
    if (side == kTrueOnly)
      ph.incomings = {{Operand::value(name), predT}, {Operand::undef(), predF}};
    else
      ph.incomings = {{Operand::undef(), predT}, {Operand::value(name), predF}};
    melded.front().phis.push_back(ph);
    info[melded.front().name].phiSides.push_back(side);
    meldedValues.insert(res);
    entryPhis[key] = res;
    return Operand::value(res);
  }

  void buildBlocks() {
    for (const auto &tb : sT.blocks) {
      std::string n = names.block(tb + ".m");
      mT[tb] = n;
      mF[mapping.at(tb)] = n;
    }
    btName = names.block(sT.exitBlock + ".bt");
    bfName = names.block(sF.exitBlock + ".bf");

    for (const auto &tb : sT.blocks) {
      const BasicBlock *TB = fn.findBlock(tb);
      const BasicBlock *FB = fn.findBlock(mapping.at(tb));
      BasicBlock MB;
      MB.name = mT[tb];
      MeldedBlockInfo mi;
      for (const auto &p : TB->phis) {
        MB.phis.push_back(p);
        mi.phiSides.push_back(kTrueOnly);
        meldedValues.insert(p.result);
      }
      for (const auto &p : FB->phis) {
        MB.phis.push_back(p);
        mi.phiSides.push_back(kFalseOnly);
        meldedValues.insert(p.result);
      }
      auto align = alignInstructions(*TB, *FB, lm, cfg.gapPenalty);
      for (const auto &e : align.entries) {
        if (e.t >= 0 && e.f >= 0) {
          Instruction ins = TB->body[e.t];
          const Instruction &fi = FB->body[e.f];
          if (!fi.result.empty()) operandMap[fi.result] = ins.result;
          mi.tags.push_back(kBoth);
          mi.falseOps.push_back(fi.operands);
          if (!ins.result.empty()) meldedValues.insert(ins.result);
          MB.body.push_back(std::move(ins));
        } else if (e.t >= 0) {
          Instruction ins = TB->body[e.t];
          mi.tags.push_back(kTrueOnly);
          mi.falseOps.emplace_back();
          if (!ins.result.empty()) meldedValues.insert(ins.result);
          MB.body.push_back(std::move(ins));
        } else {
          Instruction ins = FB->body[e.f];
          mi.tags.push_back(kFalseOnly);
          mi.falseOps.emplace_back();
          if (!ins.result.empty()) meldedValues.insert(ins.result);
          MB.body.push_back(std::move(ins));
        }
      }
      if (tb == sT.exitBlock) {
        MB.terminator.op = Opcode::CondBr;
        MB.terminator.operands = {cond, Operand::label(btName),
                                  Operand::label(bfName)};
      } else {
        MB.terminator = TB->terminator;
        for (auto &o : MB.terminator.operands)
          if (o.isLabel()) o.text = mT.at(o.text);
        if (MB.terminator.op == Opcode::CondBr) {
          mi.pairedTerm = true;
          mi.falseTermOps = FB->terminator.operands;
        }
      }
      info[MB.name] = std::move(mi);
      melded.push_back(std::move(MB));
    }
  }

  void setOperands() {
    for (auto &MB : melded) {
      MeldedBlockInfo &mi = info[MB.name];
      std::map<std::string, std::string> selCache;
      std::vector<Instruction> body;
      std::vector<int> tags;
      std::vector<std::vector<Operand>> falseOps;
      auto emitSelect = [&](const Operand &a, const Operand &b) {
        std::string key = operandKey(a) + "|" + operandKey(b);
        auto it = selCache.find(key);
        if (it != selCache.end()) return Operand::value(it->second);
        Instruction sel;
        sel.op = Opcode::Select;
        sel.result = names.value("sel");
        sel.operands = {cond, a, b};
        meldedValues.insert(sel.result);
        selCache[sel.result.empty() ? key : key] = sel.result;
        body.push_back(std::move(sel));
        tags.push_back(kBoth);
        falseOps.emplace_back();
        ++selects;
        return Operand::value(body.back().result);
      };
      for (size_t k = 0; k < MB.body.size(); ++k) {
        Instruction ins = MB.body[k];
        int tag = mi.tags[k];
        if (tag == kBoth) {
          for (size_t i = 0; i < ins.operands.size(); ++i) {
            if (ins.operands[i].isLabel() || ins.operands[i].isMem()) continue;
            Operand rT = resolve(ins.operands[i], kTrueOnly);
            Operand rF = resolve(mi.falseOps[k][i], kFalseOnly);
            ins.operands[i] = rT == rF ? rT : emitSelect(rT, rF);
          }
        } else {
          for (auto &o : ins.operands)
            if (!o.isLabel() && !o.isMem()) o = resolve(o, tag);
        }
        body.push_back(std::move(ins));
        tags.push_back(tag);
        falseOps.emplace_back();
      }
      if (mi.pairedTerm) {
        Operand rT = resolve(MB.terminator.operands[0], kTrueOnly);
        Operand rF = resolve(mi.falseTermOps[0], kFalseOnly);
        MB.terminator.operands[0] = rT == rF ? rT : emitSelect(rT, rF);
      }
      MB.body = std::move(body);
      mi.tags = std::move(tags);
      mi.falseOps = std::move(falseOps);
    }

    // Phi incomings.
    std::string entryName = melded.front().name;
    for (auto &MB : melded) {
      MeldedBlockInfo &mi = info[MB.name];
      for (size_t k = 0; k < MB.phis.size(); ++k) {
        PhiNode &ph = MB.phis[k];
        int side = mi.phiSides[k];
        bool isEntry = MB.name == entryName;
        bool isSynthetic = false;
        // Synthetic entry phis (created by resolve) already reference the
        // outside predecessors directly.
        for (const auto &[key, res] : entryPhis)
          if (res == ph.result) isSynthetic = true;
        if (isSynthetic) continue;
        if (isEntry) {
          // Single outside incoming; add undef for the other predecessor.
          if (predT != predF) {
            std::string other = side == kTrueOnly ? predF : predT;
            ph.incomings.emplace_back(Operand::undef(), other);
          }
          continue;
        }
        for (auto &[v, p] : ph.incomings) {
          p = side == kTrueOnly ? mT.at(p) : mF.at(p);
          if (v.isValue()) v = resolve(v, side);
        }
      }
    }
  }

  void rewire() {
    std::string meldedEntry = melded.front().name;
    for (auto &o : fn.findBlock(predT)->terminator.operands)
      if (o.isLabel() && o.text == sT.entry) o.text = meldedEntry;
    for (auto &o : fn.findBlock(predF)->terminator.operands)
      if (o.isLabel() && o.text == sF.entry) o.text = meldedEntry;

    for (auto &phi : fn.findBlock(succT)->phis)
      for (auto &[v, p] : phi.incomings)
        if (p == sT.exitBlock) {
          p = btName;
          if (v.isValue()) v = resolve(v, kTrueOnly);
        }
    for (auto &phi : fn.findBlock(succF)->phis)
      for (auto &[v, p] : phi.incomings)
        if (p == sF.exitBlock) {
          p = bfName;
          if (v.isValue()) v = resolve(v, kFalseOnly);
        }

    BasicBlock bt;
    bt.name = btName;
    bt.terminator.op = Opcode::Br;
    bt.terminator.operands = {Operand::label(succT)};
    BasicBlock bf;
    bf.name = bfName;
    bf.terminator.op = Opcode::Br;
    bf.terminator.operands = {Operand::label(succF)};

    std::vector<BasicBlock> rebuilt;
    for (auto &b : fn.blocks) {
      if (b.name == sT.entry) {
        for (auto &mb : melded) rebuilt.push_back(std::move(mb));
        rebuilt.push_back(std::move(bt));
        rebuilt.push_back(std::move(bf));
        continue;
      }
      if (sT.contains(b.name) || sF.contains(b.name)) continue;
      rebuilt.push_back(std::move(b));
    }
    fn.blocks = std::move(rebuilt);
  }
};

// Splits guarded runs out of one melded block. `guard[i]` marks body
// instructions to move, `sideOf[i]` tells which path owns them.
int unpredicateBlock(Function &f, const std::string &blockName,
                     const Operand &cond, const std::vector<bool> &guard,
                     const std::vector<int> &sideOf) {
  BasicBlock *blk = f.findBlock(blockName);
  bool anyRun = false;
  for (bool g : guard) anyRun |= g;
  if (!anyRun) return 0;

  NameSource names(f);
  struct Segment {
    std::vector<Instruction> instrs;
    int side = kBoth;
  };
  std::vector<Segment> segs;
  for (size_t i = 0; i < blk->body.size(); ++i) {
    int side = guard[i] ? sideOf[i] : kBoth;
    if (segs.empty() || segs.back().side != side || side == kBoth) {
      if (segs.empty() || segs.back().side != kBoth || side != kBoth)
        segs.push_back({{}, side});
    }
    segs.back().instrs.push_back(blk->body[i]);
  }

  Instruction finalTerm = blk->terminator;
  std::string firstName = blk->name;
  blk->body.clear();

  std::vector<BasicBlock> newBlocks;
  std::string curName = firstName;
  auto curBlock = [&]() -> BasicBlock * {
    if (curName == firstName) return f.findBlock(firstName);
    for (auto &b : newBlocks)
      if (b.name == curName) return &b;
    return nullptr;
  };

  int runs = 0;
  std::vector<std::pair<std::string, std::vector<std::string>>> guardDefs;
  for (auto &seg : segs) {
    if (seg.side == kBoth) {
      auto *cb = curBlock();
      for (auto &i : seg.instrs) cb->body.push_back(i);
      continue;
    }
    ++runs;
    std::string gName = names.block(firstName + ".g");
    std::string tName = names.block(firstName + ".u");
    auto *cb = curBlock();
    cb->terminator.op = Opcode::CondBr;
    if (seg.side == kTrueOnly)
      cb->terminator.operands = {cond, Operand::label(gName),
                                 Operand::label(tName)};
    else
      cb->terminator.operands = {cond, Operand::label(tName),
                                 Operand::label(gName)};
    BasicBlock g;
    g.name = gName;
    g.body = seg.instrs;
    g.terminator.op = Opcode::Br;
    g.terminator.operands = {Operand::label(tName)};
    BasicBlock t;
    t.name = tName;
    // Tail phis come after the global use rewrite below.
    std::vector<std::string> defs;
    for (auto &i : g.body)
      if (!i.result.empty()) defs.push_back(i.result);
    newBlocks.push_back(std::move(g));
    newBlocks.push_back(std::move(t));
    guardDefs.push_back({gName, defs});
    curName = tName;
  }
  auto *last = curBlock();
  last->terminator = finalTerm;
  std::string lastName = curName;

  // Successor phis referencing the original block now come from the last
  // chain block.
  if (lastName != firstName) {
    for (auto &b : f.blocks)
      for (auto &phi : b.phis)
        for (auto &[v, p] : phi.incomings)
          if (p == firstName) p = lastName;
  }

  // Splice the new blocks right after the original one.
  int idx = f.blockIndex(firstName);
  f.blocks.insert(f.blocks.begin() + idx + 1, newBlocks.begin(),
                  newBlocks.end());

  // Tail phis for guarded definitions with uses outside their guard block.
  for (auto &[gName, defs] : guardDefs) {
    // The tail is the guard's unique successor; the skip source is the
    // guard's unique predecessor.
    std::string tName = f.findBlock(gName)->successors().front();
    std::string skipFrom;
    for (auto &[bn, ps] : f.predecessors())
      if (bn == gName) skipFrom = ps.front();
    for (auto &d : defs) {
      if (!usedOutsideBlock(f, d, gName)) continue;
      NameSource ns(f);
      std::string nd = ns.value(d + ".u");
      // Rewrite all uses outside the guard first.
      for (auto &b : f.blocks) {
        if (b.name == gName) continue;
        for (auto &ins : b.body)
          for (auto &o : ins.operands)
            if (o.isValue() && o.text == d) o.text = nd;
        for (auto &o : b.terminator.operands)
          if (o.isValue() && o.text == d) o.text = nd;
        for (auto &phi : b.phis)
          for (auto &[v, p] : phi.incomings)
            if (v.isValue() && v.text == d) v.text = nd;
      }
      PhiNode ph;
      ph.result = nd;
      ph.incomings = {{Operand::value(d), gName},
                      {Operand::undef(), skipFrom}};
      f.findBlock(tName)->phis.push_back(ph);
    }
  }
  return runs;
}

}  // namespace

MeldOutcome meldSubgraphs(Function &f, SeseSubgraph sT, SeseSubgraph sF,
                          const Operand &cond, MeldKind kind,
                          const MeldConfig &cfg, const LatencyModel &lm) {
  MeldOutcome out;
  std::map<std::string, std::string> mapping;  // T -> F
  bool replication = kind == MeldKind::BlockRegion;
  bool regionOnTrue = false;  // which side held the original region
  std::string slotT;  // T-side block of the placed pair under replication

  if (replication) {
    bool blockOnTrue = sT.isBlock;
    regionOnTrue = !blockOnTrue;
    SeseSubgraph &blockSide = blockOnTrue ? sT : sF;
    const SeseSubgraph &regionSide = blockOnTrue ? sF : sT;
    BasicBlock b = *f.findBlock(blockSide.entry);
    ReplicaPlan plan = planReplication(f, b, regionSide, lm);

    auto preds = f.predecessors();
    std::string P = preds[b.name].front();
    std::string S = f.findBlock(b.name)->successors().front();

    // Fold the block's degenerate single-incoming phis.
    std::map<std::string, Operand> phiSubst;
    BasicBlock *slotRb = nullptr;
    for (auto &rb : plan.blocks)
      if (rb.name == plan.slotReplicaBlock) slotRb = &rb;
    for (auto &phi : slotRb->phis) {
      if (phi.incomings.size() != 1)
        throw std::runtime_error("single block with a merging phi");
      phiSubst[phi.result] = phi.incomings[0].first;
    }
    slotRb->phis.clear();
    auto subst = [&](Operand &o) {
      if (!o.isValue()) return;
      auto it = phiSubst.find(o.text);
      if (it != phiSubst.end()) o = it->second;
    };
    for (auto &rb : plan.blocks) {
      for (auto &ins : rb.body)
        for (auto &o : ins.operands) subst(o);
      for (auto &o : rb.terminator.operands) subst(o);
    }
    if (!phiSubst.empty()) {
      for (auto &blk : f.blocks) {
        for (auto &ins : blk.body)
          for (auto &o : ins.operands) subst(o);
        for (auto &o : blk.terminator.operands) subst(o);
        for (auto &phi : blk.phis)
          for (auto &[v, p] : phi.incomings) subst(v);
      }
    }

    std::string replicaEntry = plan.blocks.front().name;
    std::string replicaExit;
    std::vector<std::string> replicaNames;
    for (auto &rb : plan.blocks) {
      replicaNames.push_back(rb.name);
      if (plan.mapping.at(rb.name) == regionSide.exitBlock) {
        replicaExit = rb.name;
        rb.terminator.operands[0] = Operand::label(S);
      }
    }
    for (auto &o : f.findBlock(P)->terminator.operands)
      if (o.isLabel() && o.text == b.name) o.text = replicaEntry;
    for (auto &phi : f.findBlock(S)->phis)
      for (auto &[v, p] : phi.incomings)
        if (p == b.name) p = replicaExit;

    int bi = f.blockIndex(b.name);
    f.blocks.erase(f.blocks.begin() + bi);
    f.blocks.insert(f.blocks.begin() + bi, plan.blocks.begin(),
                    plan.blocks.end());

    std::vector<std::string> defs;
    for (auto &ins : f.findBlock(plan.slotReplicaBlock)->body)
      if (!ins.result.empty()) defs.push_back(ins.result);
    for (auto &v : defs)
      if (usedOutsideBlock(f, v, plan.slotReplicaBlock))
        repairSsa(f, v, plan.slotReplicaBlock);

    SeseSubgraph repl;
    repl.isBlock = false;
    repl.entry = replicaEntry;
    repl.exitBlock = replicaExit;
    repl.blocks = replicaNames;
    if (blockOnTrue) {
      sT = repl;
      for (auto &[rn, mn] : plan.mapping) mapping[rn] = mn;
      slotT = plan.slotReplicaBlock;
    } else {
      sF = repl;
      for (auto &[rn, mn] : plan.mapping) mapping[mn] = rn;
      slotT = plan.slotRegionBlock;
    }
  } else if (kind == MeldKind::RegionRegion) {
    if (!isomorphicSubgraphs(f, sT, sF, &mapping))
      throw std::runtime_error("region pair is not isomorphic");
  } else if (kind == MeldKind::BlockBlock) {
    mapping[sT.entry] = sF.entry;
  } else {
    throw std::runtime_error("pair is not meldable");
  }

  preprocessSubgraphs(f, sT, sF, cond);

  Melder m(f, sT, sF, cond, mapping, cfg, lm);
  m.computeBoundary();
  m.buildBlocks();
  m.setOperands();

  // Snapshot tag info before rewiring moves blocks around.
  std::vector<std::pair<std::string, MeldedBlockInfo>> tagInfo;
  for (auto &mb : m.melded) tagInfo.push_back({mb.name, m.info[mb.name]});
  std::string slotMelded = replication && !slotT.empty() ? m.mT[slotT] : "";
  std::set<std::string> meldedValuesCopy = m.meldedValues;

  m.rewire();
  out.meldedEntry = m.melded.empty() ? "" : tagInfo.front().first;
  for (auto &[name, mi] : tagInfo) out.meldedBlocks.push_back(name);
  out.selectsInserted = m.selects;

  // Unpredication.
  for (auto &[name, mi] : tagInfo) {
    BasicBlock *blk = f.findBlock(name);
    if (!blk) continue;
    size_t n = blk->body.size();
    if (mi.tags.size() != n) continue;
    std::vector<bool> guard(n, false);
    std::vector<int> sideOf(mi.tags);
    if (replication && name != slotMelded) {
      // Full predication outside the placed pair: rewrite one-sided stores
      // whose address is available to every lane; guard the rest and any
      // trapping instruction.
      int regionTag = regionOnTrue ? kTrueOnly : kFalseOnly;
      std::vector<Instruction> body;
      std::vector<int> tags;
      NameSource ns(f);
      for (size_t i = 0; i < n; ++i) {
        Instruction ins = blk->body[i];
        int tag = mi.tags[i];
        bool isStore = ins.op == Opcode::StoreShared ||
                       ins.op == Opcode::StoreGlobal;
        bool traps = ins.op == Opcode::Div || ins.op == Opcode::Rem;
        if (tag != kBoth && isStore) {
          const Operand &addr = ins.operands[1];
          bool safeAddr =
              !addr.isValue() || !meldedValuesCopy.count(addr.text);
          if (safeAddr) {
            Instruction ld;
            ld.op = ins.op == Opcode::StoreShared ? Opcode::LoadShared
                                                  : Opcode::LoadGlobal;
            ld.result = ns.value("old");
            ld.operands = {ins.operands[0], addr};
            Instruction sel;
            sel.op = Opcode::Select;
            sel.result = ns.value("pred");
            if (tag == kTrueOnly)
              sel.operands = {cond, ins.operands[2],
                              Operand::value(ld.result)};
            else
              sel.operands = {cond, Operand::value(ld.result),
                              ins.operands[2]};
            ins.operands[2] = Operand::value(sel.result);
            body.push_back(std::move(ld));
            tags.push_back(kBoth);
            body.push_back(std::move(sel));
            tags.push_back(kBoth);
            body.push_back(std::move(ins));
            tags.push_back(kBoth);
            continue;
          }
          body.push_back(std::move(ins));
          tags.push_back(tag);
          continue;
        }
        if (tag != kBoth && traps) {
          body.push_back(std::move(ins));
          tags.push_back(tag);
          continue;
        }
        body.push_back(std::move(ins));
        tags.push_back(kBoth);  // pure one-sided code runs fully predicated
      }
      (void)regionTag;
      blk->body = std::move(body);
      n = blk->body.size();
      guard.assign(n, false);
      sideOf.assign(n, kBoth);
      for (size_t i = 0; i < n; ++i)
        if (tags[i] != kBoth) {
          guard[i] = true;
          sideOf[i] = tags[i];
        }
    } else {
      for (size_t i = 0; i < n; ++i)
        if (mi.tags[i] != kBoth) guard[i] = true;
    }
    out.unpredicatedRuns += unpredicateBlock(f, name, cond, guard, sideOf);
  }
  return out;
}

}  // namespace darm
