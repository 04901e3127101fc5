#include "darm/regions.hpp"

#include <algorithm>
#include <deque>
#include <functional>
#include <stdexcept>

namespace darm {

std::set<std::string> reachableUntil(const Function &f, const std::string &from,
                                     const std::string &stop) {
  std::set<std::string> seen;
  std::deque<std::string> work{from};
  while (!work.empty()) {
    std::string b = work.front();
    work.pop_front();
    if (b == stop || seen.count(b)) continue;
    seen.insert(b);
    const BasicBlock *bb = f.findBlock(b);
    if (!bb) throw std::runtime_error("unknown block '" + b + "'");
    for (const auto &s : bb->successors()) work.push_back(s);
  }
  return seen;
}

namespace {

// Blocks on the path that every execution from `sideEntry` to `join` must
// pass, ordered from sideEntry towards join, with `join` appended.
std::vector<std::string> cutPoints(const std::set<std::string> &side,
                                   const std::string &sideEntry,
                                   const std::string &join,
                                   const DomTree &pdom) {
  std::vector<std::string> cuts;
  for (const auto &b : side)
    if (pdom.dominates(b, sideEntry)) cuts.push_back(b);
  std::sort(cuts.begin(), cuts.end(),
            [&](const std::string &a, const std::string &b) {
              return pdom.depth(a) > pdom.depth(b);
            });
  cuts.push_back(join);
  return cuts;
}

std::vector<std::string> preOrderWithin(const Function &f,
                                        const std::string &entry,
                                        const std::set<std::string> &seg) {
  std::vector<std::string> order;
  std::set<std::string> seen;
  std::function<void(const std::string &)> dfs = [&](const std::string &b) {
    if (!seg.count(b) || seen.count(b)) return;
    seen.insert(b);
    order.push_back(b);
    for (const auto &s : f.findBlock(b)->successors()) dfs(s);
  };
  dfs(entry);
  return order;
}

}  // namespace

std::vector<SeseSubgraph> decomposePath(const Function &f,
                                        const std::string &sideEntry,
                                        const std::string &join,
                                        const DomTree &dom,
                                        const DomTree &pdom) {
  (void)dom;
  std::vector<SeseSubgraph> out;
  if (sideEntry == join) return out;
  auto side = reachableUntil(f, sideEntry, join);
  auto preds = f.predecessors();
  auto cuts = cutPoints(side, sideEntry, join, pdom);
  // cuts is the articulation chain in path order, with the join appended.
  size_t idx = 0;
  while (idx + 1 < cuts.size()) {
    const std::string &c = cuts[idx];
    const std::string &next = cuts[idx + 1];
    bool nextIsJoin = idx + 2 == cuts.size();
    auto seg = reachableUntil(f, c, next);
    SeseSubgraph sg;
    sg.entry = c;
    if (seg.size() == 1) {
      const BasicBlock *bb = f.findBlock(c);
      sg.isBlock = preds[c].size() == 1 && bb->successors().size() == 1;
      sg.exitBlock = c;
      sg.blocks = {c};
      idx += 1;
    } else {
      // Multi-block span; the next articulation closes it and becomes the
      // exit block of the subgraph.
      if (nextIsJoin)
        throw std::runtime_error("segment at '" + c +
                                 "' merges directly into '" + join +
                                 "'; simplify first");
      if (f.findBlock(next)->successors().size() != 1)
        throw std::runtime_error("exit block '" + next + "' of segment at '" +
                                 c + "' branches; simplify first");
      sg.exitBlock = next;
      sg.blocks = preOrderWithin(f, c, seg);
      sg.blocks.push_back(next);
      idx += 2;
    }
    out.push_back(std::move(sg));
  }
  return out;
}

std::vector<Region> computeRegions(const Function &f) {
  DomTree dom = computeDominators(f);
  DomTree pdom = computePostDominators(f);

  std::vector<Region> flat;
  for (const auto &b : f.blocks) {
    if (b.successors().size() < 2) continue;
    Region best;
    bool found = false;
    std::string x = pdom.idom(b.name);
    while (!x.empty()) {
      auto body = reachableUntil(f, b.name, x);
      bool valid = true;
      for (const auto &blk : body) {
        if (!dom.dominates(b.name, blk) || !pdom.dominates(x, blk)) {
          valid = false;
          break;
        }
      }
      if (valid) {
        best.entry = b.name;
        best.exit = x;
        best.body.assign(body.begin(), body.end());
        found = true;
      }
      x = pdom.idom(x);
    }
    if (!found) continue;
    auto preds = f.predecessors();
    std::set<std::string> bodySet(best.body.begin(), best.body.end());
    int entryEdges = 0;
    for (const auto &p : preds[best.entry])
      if (!bodySet.count(p)) ++entryEdges;
    int exitEdges = 0;
    for (const auto &blk : best.body)
      for (const auto &s : f.findBlock(blk)->successors())
        if (s == best.exit) ++exitEdges;
    best.simple = entryEdges == 1 && exitEdges == 1;
    flat.push_back(std::move(best));
  }

  // Nest by body inclusion, smallest regions first.
  std::sort(flat.begin(), flat.end(), [](const Region &a, const Region &b) {
    return a.body.size() < b.body.size();
  });
  auto containedIn = [](const Region &inner, const Region &outer) {
    if (inner.body.size() >= outer.body.size()) return false;
    std::set<std::string> o(outer.body.begin(), outer.body.end());
    for (const auto &b : inner.body)
      if (!o.count(b)) return false;
    return true;
  };
  std::vector<Region> top;
  std::vector<bool> placed(flat.size(), false);
  for (size_t i = 0; i < flat.size(); ++i) {
    for (size_t j = i + 1; j < flat.size(); ++j) {
      if (containedIn(flat[i], flat[j])) {
        flat[j].children.push_back(flat[i]);
        placed[i] = true;
        break;
      }
    }
  }
  for (size_t i = 0; i < flat.size(); ++i)
    if (!placed[i]) top.push_back(flat[i]);
  // Restore function block order for the top level.
  std::sort(top.begin(), top.end(), [&](const Region &a, const Region &b) {
    return f.blockIndex(a.entry) < f.blockIndex(b.entry);
  });
  return top;
}

namespace {

// Inserts a forwarding block collecting all edges from `sources` into `join`,
// migrating the affected phi incomings.
void materializeExit(Function &f, const std::vector<std::string> &sources,
                     const std::string &join) {
  std::string name = f.freshBlock(join + ".x");
  BasicBlock nb;
  nb.name = name;
  nb.terminator.op = Opcode::Br;
  nb.terminator.operands.push_back(Operand::label(join));

  std::set<std::string> srcSet(sources.begin(), sources.end());
  for (const auto &s : sources) {
    BasicBlock *sb = f.findBlock(s);
    for (auto &op : sb->terminator.operands)
      if (op.isLabel() && op.text == join) op.text = name;
  }

  BasicBlock *jb = f.findBlock(join);
  for (auto &phi : jb->phis) {
    std::vector<std::pair<Operand, std::string>> kept;
    std::vector<std::pair<Operand, std::string>> moved;
    for (auto &in : phi.incomings) {
      if (srcSet.count(in.second))
        moved.push_back(in);
      else
        kept.push_back(in);
    }
    if (moved.empty()) continue;
    Operand fromNew = moved.front().first;
    if (moved.size() > 1) {
      PhiNode np;
      np.result = f.freshValue(phi.result + ".x");
      np.incomings = moved;
      nb.phis.push_back(np);
      fromNew = Operand::value(nb.phis.back().result);
    }
    kept.emplace_back(fromNew, name);
    phi.incomings = kept;
  }

  // Place the new block right before the join for readable output.
  int idx = f.blockIndex(join);
  f.blocks.insert(f.blocks.begin() + idx, std::move(nb));
}

// Finds one violation of subregion simplicity under (entry, join) and fixes
// it. Returns true if something was rewritten.
bool simplifyStep(Function &f, const std::string &entry,
                  const std::string &join, const DomTree &dom,
                  const DomTree &pdom) {
  const BasicBlock *eb = f.findBlock(entry);
  std::vector<std::string> sides;
  for (const auto &s : eb->successors())
    if (s != join &&
        std::find(sides.begin(), sides.end(), s) == sides.end())
      sides.push_back(s);
  for (const auto &sideEntry : sides) {
    auto side = reachableUntil(f, sideEntry, join);
    auto cuts = cutPoints(side, sideEntry, join, pdom);
    size_t idx = 0;
    while (idx + 1 < cuts.size()) {
      const std::string &c = cuts[idx];
      const std::string &next = cuts[idx + 1];
      bool nextIsJoin = idx + 2 == cuts.size();
      auto seg = reachableUntil(f, c, next);
      if (seg.size() == 1) {
        idx += 1;
        continue;
      }
      std::vector<std::string> exits;
      for (const auto &b : seg)
        for (const auto &s : f.findBlock(b)->successors())
          if (s == next) {
            exits.push_back(b);
            break;
          }
      // A span may only end in a dedicated exit block: one that is not the
      // join itself and does not branch. Otherwise collect the offending
      // edges into a fresh forwarding block.
      if (nextIsJoin || f.findBlock(next)->successors().size() > 1) {
        materializeExit(f, exits, next);
        return true;
      }
      if (simplifyStep(f, c, next, dom, pdom)) return true;
      idx += 2;
    }
  }
  return false;
}

}  // namespace

bool simplifyRegion(Function &f, const std::string &entry,
                    const std::string &exit) {
  bool changed = false;
  while (true) {
    DomTree dom = computeDominators(f);
    DomTree pdom = computePostDominators(f);
    if (!simplifyStep(f, entry, exit, dom, pdom)) break;
    changed = true;
  }
  return changed;
}

}  // namespace darm
