#include "darm/dominators.hpp"

#include <algorithm>
#include <functional>
#include <set>
#include <stdexcept>

namespace darm {

std::string DomTree::idom(const std::string &b) const {
  auto it = idom_.find(b);
  return it == idom_.end() ? std::string() : it->second;
}

int DomTree::depth(const std::string &b) const {
  auto it = depth_.find(b);
  return it == depth_.end() ? -1 : it->second;
}

bool DomTree::contains(const std::string &b) const { return depth_.count(b) > 0; }

bool DomTree::dominates(const std::string &a, const std::string &b) const {
  if (!contains(a) || !contains(b)) return false;
  std::string cur = b;
  while (true) {
    if (cur == a) return true;
    auto it = idom_.find(cur);
    if (it == idom_.end()) return false;
    cur = it->second;
  }
}

bool DomTree::strictlyDominates(const std::string &a,
                                const std::string &b) const {
  return a != b && dominates(a, b);
}

DomTree DomTree::build(
    const std::string &root, const std::vector<std::string> &blocks,
    const std::map<std::string, std::vector<std::string>> &preds,
    const std::map<std::string, std::vector<std::string>> &succs) {
  // Iterative dataflow over a reverse postorder (Cooper-Harvey-Kennedy).
  std::vector<std::string> rpo;
  std::set<std::string> visited;
  std::function<void(const std::string &)> dfs = [&](const std::string &b) {
    visited.insert(b);
    auto it = succs.find(b);
    if (it != succs.end())
      for (const auto &s : it->second)
        if (!visited.count(s)) dfs(s);
    rpo.push_back(b);
  };
  dfs(root);
  std::reverse(rpo.begin(), rpo.end());

  for (const auto &b : blocks)
    if (!visited.count(b))
      throw std::runtime_error("unreachable block '" + b + "'");

  std::map<std::string, int> rpoIndex;
  for (size_t i = 0; i < rpo.size(); ++i) rpoIndex[rpo[i]] = static_cast<int>(i);

  std::map<std::string, std::string> idom;
  idom[root] = root;
  auto intersect = [&](std::string a, std::string b) {
    while (a != b) {
      while (rpoIndex[a] > rpoIndex[b]) a = idom[a];
      while (rpoIndex[b] > rpoIndex[a]) b = idom[b];
    }
    return a;
  };
  bool changed = true;
  while (changed) {
    changed = false;
    for (const auto &b : rpo) {
      if (b == root) continue;
      std::string newIdom;
      auto pit = preds.find(b);
      if (pit != preds.end()) {
        for (const auto &p : pit->second) {
          if (!visited.count(p) || !idom.count(p)) continue;
          newIdom = newIdom.empty() ? p : intersect(newIdom, p);
        }
      }
      if (newIdom.empty())
        throw std::runtime_error("block '" + b + "' has no processed preds");
      auto it = idom.find(b);
      if (it == idom.end() || it->second != newIdom) {
        idom[b] = newIdom;
        changed = true;
      }
    }
  }

  DomTree t;
  t.root_ = root;
  for (const auto &[b, d] : idom)
    if (b != root) t.idom_[b] = d;
  std::function<int(const std::string &)> depthOf = [&](const std::string &b) {
    auto it = t.depth_.find(b);
    if (it != t.depth_.end()) return it->second;
    int d = b == root ? 0 : depthOf(t.idom_.at(b)) + 1;
    t.depth_[b] = d;
    return d;
  };
  for (const auto &b : rpo) depthOf(b);
  return t;
}

std::string uniqueRetBlock(const Function &f) {
  std::string ret;
  for (const auto &b : f.blocks) {
    if (b.terminator.op == Opcode::Ret) {
      if (!ret.empty())
        throw std::runtime_error("function '" + f.name +
                                 "' has multiple ret blocks");
      ret = b.name;
    }
  }
  if (ret.empty())
    throw std::runtime_error("function '" + f.name + "' has no ret block");
  return ret;
}

DomTree computeDominators(const Function &f) {
  std::map<std::string, std::vector<std::string>> succs;
  std::vector<std::string> names;
  for (const auto &b : f.blocks) {
    names.push_back(b.name);
    succs[b.name] = b.successors();
  }
  return DomTree::build(f.entry().name, names, f.predecessors(), succs);
}

DomTree computePostDominators(const Function &f) {
  std::string sink = uniqueRetBlock(f);
  std::map<std::string, std::vector<std::string>> succs;
  std::vector<std::string> names;
  for (const auto &b : f.blocks) {
    names.push_back(b.name);
    succs[b.name] = b.successors();
  }
  return DomTree::build(sink, names, succs, f.predecessors());
}

std::map<std::string, std::vector<std::string>> dominanceFrontiers(
    const Function &f, const DomTree &dom) {
  std::map<std::string, std::set<std::string>> df;
  auto preds = f.predecessors();
  for (const auto &b : f.blocks) {
    const auto &ps = preds[b.name];
    if (ps.size() < 2) continue;
    for (const auto &p : ps) {
      std::string runner = p;
      while (!runner.empty() && runner != dom.idom(b.name)) {
        df[runner].insert(b.name);
        runner = dom.idom(runner);
      }
    }
  }
  std::map<std::string, std::vector<std::string>> out;
  for (auto &[k, v] : df) out[k] = std::vector<std::string>(v.begin(), v.end());
  return out;
}

}  // namespace darm
