#include "darm/interp.hpp"

#include <bit>
#include <sstream>
#include <stdexcept>

#include "darm/dominators.hpp"

namespace darm {

namespace {

using Mask = uint64_t;

struct Lane {
  int32_t v = 0;
  bool taint = false;
};

struct Cell {
  int32_t v = 0;
  bool taint = false;
};

struct NonTermination {};

struct Machine {
  const Module &m;
  const Function &f;
  const LatencyModel &lm;
  int warpSize;
  int64_t maxSteps;

  DomTree pdom;
  std::vector<std::map<std::string, Lane>> regs;  // per lane
  std::vector<std::string> prevBlock;             // per lane
  std::map<std::string, std::vector<Cell>> globalMem;
  std::map<std::string, std::vector<Cell>> sharedMem;
  Mask dead = 0;      // faulted lanes
  Mask finished = 0;  // lanes past their ret
  WarpResult out;

  Machine(const Module &mod, const Function &fn, const LatencyModel &lat,
          int ws, int64_t steps)
      : m(mod), f(fn), lm(lat), warpSize(ws), maxSteps(steps),
        pdom(computePostDominators(fn)), regs(ws), prevBlock(ws) {
    out.returns.assign(ws, std::nullopt);
  }

  Mask live(Mask mask) const { return mask & ~dead & ~finished; }

  void fault(int lane, const std::string &block, const std::string &msg) {
    out.faults.push_back({lane, block, msg});
    dead |= Mask(1) << lane;
  }

  void taintHit(const std::string &where) {
    if (!out.taintedObservable) {
      out.taintedObservable = true;
      out.taintNote = "undef-derived value observed at " + where;
    }
  }

  void issue(Opcode op, Mask active) {
    int64_t lat = lm.latency(op);
    out.stats.issuedInstructions += 1;
    out.stats.threadCycles += lat * warpSize;
    out.stats.usefulThreadCycles += lat * std::popcount(active);
    if (op == Opcode::LoadShared || op == Opcode::StoreShared)
      out.stats.sharedMemIssues += 1;
    if (op == Opcode::LoadGlobal || op == Opcode::StoreGlobal)
      out.stats.globalMemIssues += 1;
    if (--maxSteps < 0) throw NonTermination{};
  }

  Lane eval(int lane, const Operand &o) {
    switch (o.kind) {
      case Operand::Kind::Imm:
        return {o.imm, false};
      case Operand::Kind::Undef:
        return {0, true};
      case Operand::Kind::Value: {
        auto it = regs[lane].find(o.text);
        if (it == regs[lane].end()) return {0, true};
        return it->second;
      }
      default:
        throw std::logic_error("label operand evaluated as data");
    }
  }

  std::vector<Cell> *memory(Opcode op, const std::string &name) {
    auto &table = (op == Opcode::LoadShared || op == Opcode::StoreShared)
                      ? sharedMem
                      : globalMem;
    auto it = table.find(name);
    if (it == table.end())
      throw std::runtime_error("unknown memory '" + name + "'");
    return &it->second;
  }

  void execInst(const BasicBlock &b, const Instruction &i, Mask active) {
    issue(i.op, active);
    for (int lane = 0; lane < warpSize; ++lane) {
      if (!(active >> lane & 1)) continue;
      Lane r;
      auto a = [&](size_t idx) { return eval(lane, i.operands[idx]); };
      switch (i.op) {
        case Opcode::Add:
        case Opcode::Sub:
        case Opcode::Mul:
        case Opcode::And:
        case Opcode::Or:
        case Opcode::Xor:
        case Opcode::Shl:
        case Opcode::Shr: {
          Lane x = a(0), y = a(1);
          uint32_t ux = uint32_t(x.v), uy = uint32_t(y.v), uv = 0;
          switch (i.op) {
            case Opcode::Add: uv = ux + uy; break;
            case Opcode::Sub: uv = ux - uy; break;
            case Opcode::Mul: uv = ux * uy; break;
            case Opcode::And: uv = ux & uy; break;
            case Opcode::Or: uv = ux | uy; break;
            case Opcode::Xor: uv = ux ^ uy; break;
            case Opcode::Shl: uv = ux << (uy & 31); break;
            case Opcode::Shr: uv = ux >> (uy & 31); break;
            default: break;
          }
          r = {int32_t(uv), x.taint || y.taint};
          break;
        }
        case Opcode::Div:
        case Opcode::Rem: {
          Lane x = a(0), y = a(1);
          if (y.v == 0) {
            fault(lane, b.name, "division by zero in %" + i.result);
            continue;
          }
          int64_t q = i.op == Opcode::Div ? int64_t(x.v) / y.v
                                          : int64_t(x.v) % y.v;
          r = {int32_t(q), x.taint || y.taint};
          break;
        }
        case Opcode::IcmpEq:
        case Opcode::IcmpNe:
        case Opcode::IcmpLt:
        case Opcode::IcmpGt:
        case Opcode::IcmpLe:
        case Opcode::IcmpGe: {
          Lane x = a(0), y = a(1);
          bool c = false;
          switch (i.op) {
            case Opcode::IcmpEq: c = x.v == y.v; break;
            case Opcode::IcmpNe: c = x.v != y.v; break;
            case Opcode::IcmpLt: c = x.v < y.v; break;
            case Opcode::IcmpGt: c = x.v > y.v; break;
            case Opcode::IcmpLe: c = x.v <= y.v; break;
            case Opcode::IcmpGe: c = x.v >= y.v; break;
            default: break;
          }
          r = {c ? 1 : 0, x.taint || y.taint};
          break;
        }
        case Opcode::Select: {
          Lane c = a(0);
          // Only the chosen side's taint propagates.
          r = c.v != 0 ? a(1) : a(2);
          r.taint = r.taint || c.taint;
          break;
        }
        case Opcode::LoadShared:
        case Opcode::LoadGlobal: {
          auto *mem = memory(i.op, i.operands[0].text);
          Lane idx = a(1);
          if (idx.taint) {
            r = {0, true};
            break;
          }
          if (idx.v < 0 || size_t(idx.v) >= mem->size()) {
            fault(lane, b.name,
                  "out-of-bounds load from " + i.operands[0].text + "[" +
                      std::to_string(idx.v) + "]");
            continue;
          }
          const Cell &c = (*mem)[size_t(idx.v)];
          r = {c.v, c.taint};
          break;
        }
        case Opcode::StoreShared:
        case Opcode::StoreGlobal: {
          auto *mem = memory(i.op, i.operands[0].text);
          Lane idx = a(1), val = a(2);
          if (idx.taint || val.taint)
            taintHit("store to " + i.operands[0].text + " in ^" + b.name);
          if (idx.taint) continue;
          if (idx.v < 0 || size_t(idx.v) >= mem->size()) {
            fault(lane, b.name,
                  "out-of-bounds store to " + i.operands[0].text + "[" +
                      std::to_string(idx.v) + "]");
            continue;
          }
          (*mem)[size_t(idx.v)] = {val.v, val.taint};
          continue;
        }
        case Opcode::Tid:
          r = {lane, false};
          break;
        case Opcode::Const:
          r = a(0);
          break;
        case Opcode::Barrier:
          continue;  // whole-warp no-op in lockstep execution
        default:
          throw std::logic_error("unexpected opcode in block body");
      }
      if (!i.result.empty()) regs[lane][i.result] = r;
    }
  }

  void execPhis(const BasicBlock &b, Mask active) {
    if (b.phis.empty()) return;
    // All phis of a block read their inputs in parallel.
    std::vector<std::vector<Lane>> staged(b.phis.size());
    for (size_t p = 0; p < b.phis.size(); ++p) {
      staged[p].resize(warpSize);
      for (int lane = 0; lane < warpSize; ++lane) {
        if (!(active >> lane & 1)) continue;
        const Operand *in = nullptr;
        for (const auto &[v, pred] : b.phis[p].incomings)
          if (pred == prevBlock[lane]) in = &v;
        if (!in)
          throw std::runtime_error("phi %" + b.phis[p].result +
                                   " has no incoming for predecessor '" +
                                   prevBlock[lane] + "'");
        staged[p][lane] = eval(lane, *in);
      }
    }
    for (size_t p = 0; p < b.phis.size(); ++p) {
      issue(Opcode::Phi, active);
      for (int lane = 0; lane < warpSize; ++lane)
        if (active >> lane & 1)
          regs[lane][b.phis[p].result] = staged[p][lane];
    }
  }

  void leaveBlock(const BasicBlock &b, Mask active) {
    for (int lane = 0; lane < warpSize; ++lane)
      if (active >> lane & 1) prevBlock[lane] = b.name;
  }

  // Runs lanes in `mask` from `block` until they reach `stop`. On return all
  // surviving lanes sit at `stop` with their prevBlock set.
  void execPath(std::string block, Mask mask, const std::string &stop) {
    while (block != stop) {
      Mask active = live(mask);
      if (active == 0) return;
      const BasicBlock *b = f.findBlock(block);
      if (!b) throw std::runtime_error("branch to unknown block '" + block + "'");
      execPhis(*b, active);
      for (const auto &i : b->body) {
        execInst(*b, i, active);
        active = live(mask);
        if (active == 0) return;
      }
      const Instruction &t = b->terminator;
      issue(t.op, active);
      switch (t.op) {
        case Opcode::Br:
          leaveBlock(*b, active);
          block = t.operands[0].text;
          break;
        case Opcode::Ret: {
          for (int lane = 0; lane < warpSize; ++lane) {
            if (!(active >> lane & 1)) continue;
            if (!t.operands.empty()) {
              Lane r = eval(lane, t.operands[0]);
              if (r.taint) taintHit("return in ^" + b->name);
              out.returns[lane] = r.v;
            }
          }
          finished |= active;
          return;
        }
        case Opcode::CondBr: {
          Mask t1 = 0;
          for (int lane = 0; lane < warpSize; ++lane) {
            if (!(active >> lane & 1)) continue;
            Lane c = eval(lane, t.operands[0]);
            if (c.taint) taintHit("branch condition in ^" + b->name);
            if (c.v != 0) t1 |= Mask(1) << lane;
          }
          Mask f1 = active & ~t1;
          leaveBlock(*b, active);
          if (f1 == 0) {
            block = t.operands[1].text;
          } else if (t1 == 0) {
            block = t.operands[2].text;
          } else {
            out.stats.divergentBranchCount += 1;
            std::string reconv = pdom.idom(block);
            if (reconv.empty())
              throw std::runtime_error("no reconvergence point for ^" + block);
            execPath(t.operands[1].text, t1, reconv);
            execPath(t.operands[2].text, f1, reconv);
            block = reconv;
          }
          break;
        }
        default:
          throw std::logic_error("bad terminator in ^" + block);
      }
    }
  }
};

std::vector<Cell> initMemory(const MemDecl &d,
                             const std::map<std::string, std::vector<int32_t>> &init) {
  std::vector<Cell> cells(size_t(d.size));
  auto it = init.find(d.name);
  if (it != init.end()) {
    if (it->second.size() > cells.size())
      throw std::runtime_error("initializer for '" + d.name +
                               "' exceeds declared size");
    for (size_t i = 0; i < it->second.size(); ++i) cells[i].v = it->second[i];
  }
  return cells;
}

}  // namespace

WarpResult executeWarp(const Module &m, const Function &f, const WarpInput &in,
                       const LatencyModel &lm, int64_t maxSteps) {
  if (in.warpSize < 1 || in.warpSize > 64)
    throw std::runtime_error("warp size must be in [1, 64]");
  if (in.args.size() != f.params.size())
    throw std::runtime_error("expected " + std::to_string(f.params.size()) +
                             " argument vectors, got " +
                             std::to_string(in.args.size()));

  Machine mach(m, f, lm, in.warpSize, maxSteps);
  for (const auto &g : m.globals)
    mach.globalMem[g.name] = initMemory(g, in.globalInit);
  for (const auto &s : f.sharedDecls)
    mach.sharedMem[s.name] = initMemory(s, in.sharedInit);
  for (size_t p = 0; p < f.params.size(); ++p) {
    const auto &vals = in.args[p];
    if (vals.size() != 1 && int(vals.size()) != in.warpSize)
      throw std::runtime_error("argument vector for '" + f.params[p] +
                               "' must have 1 or warpSize elements");
    for (int lane = 0; lane < in.warpSize; ++lane)
      mach.regs[lane][f.params[p]] = {vals.size() == 1 ? vals[0] : vals[lane],
                                      false};
  }

  Mask all = in.warpSize == 64 ? ~Mask(0) : (Mask(1) << in.warpSize) - 1;
  std::string ret = uniqueRetBlock(f);
  try {
    mach.execPath(f.entry().name, all, ret);
    // The ret block itself.
    if (mach.live(all)) mach.execPath(ret, all, "");
  } catch (const NonTermination &) {
    mach.out.nonTerminated = true;
  }

  WarpResult result = std::move(mach.out);
  for (const auto &[name, cells] : mach.globalMem) {
    auto &v = result.globalFinal[name];
    for (const auto &c : cells) v.push_back(c.v);
  }
  for (const auto &[name, cells] : mach.sharedMem) {
    auto &v = result.sharedFinal[name];
    for (const auto &c : cells) v.push_back(c.v);
  }
  auto &st = result.stats;
  st.serializedCycles = st.threadCycles - st.usefulThreadCycles;
  st.utilization = st.threadCycles == 0
                       ? 1.0
                       : double(st.usefulThreadCycles) / double(st.threadCycles);
  return result;
}

CompareVerdict compareRuns(const WarpResult &a, const WarpResult &b) {
  CompareVerdict v;
  auto mismatch = [&](const std::string &msg) {
    if (v.equal) {
      v.equal = false;
      v.diff = msg;
    }
  };
  if (a.nonTerminated || b.nonTerminated)
    mismatch("a run did not terminate");
  if (a.taintedObservable)
    mismatch("baseline run observed undef: " + a.taintNote);
  else if (b.taintedObservable)
    mismatch("transformed run observed undef: " + b.taintNote);
  if (!v.equal) return v;

  if (a.returns.size() != b.returns.size()) {
    mismatch("warp sizes differ");
    return v;
  }
  for (size_t lane = 0; lane < a.returns.size(); ++lane) {
    if (a.returns[lane] != b.returns[lane]) {
      std::ostringstream os;
      os << "lane " << lane << " returns differ";
      mismatch(os.str());
      return v;
    }
  }
  if (a.faults.size() != b.faults.size()) {
    mismatch("fault counts differ");
    return v;
  }
  if (a.globalFinal != b.globalFinal) {
    for (const auto &[name, cells] : a.globalFinal) {
      auto it = b.globalFinal.find(name);
      if (it == b.globalFinal.end() || it->second != cells) {
        mismatch("global memory '" + name + "' differs");
        return v;
      }
    }
    mismatch("global memory layout differs");
  }
  return v;
}

}  // namespace darm
