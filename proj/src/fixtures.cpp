#include "darm/fixtures.hpp"

#include <fstream>
#include <random>
#include <stdexcept>

namespace darm {

using nlohmann::json;

WarpInput warpInputFromJson(const json &j) {
  WarpInput in;
  in.warpSize = j.value("warpSize", 32);
  in.seed = j.value("seed", uint64_t(0));
  if (j.contains("args"))
    for (const auto &a : j.at("args"))
      in.args.push_back(a.get<std::vector<int32_t>>());
  if (j.contains("global"))
    for (const auto &[name, vals] : j.at("global").items())
      in.globalInit[name] = vals.get<std::vector<int32_t>>();
  if (j.contains("shared"))
    for (const auto &[name, vals] : j.at("shared").items())
      in.sharedInit[name] = vals.get<std::vector<int32_t>>();
  return in;
}

json warpInputToJson(const WarpInput &in) {
  json j;
  j["warpSize"] = in.warpSize;
  j["seed"] = in.seed;
  j["args"] = in.args;
  j["global"] = json::object();
  for (const auto &[name, vals] : in.globalInit) j["global"][name] = vals;
  j["shared"] = json::object();
  for (const auto &[name, vals] : in.sharedInit) j["shared"][name] = vals;
  return j;
}

WarpInput loadWarpInput(const std::string &path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open fixture '" + path + "'");
  json j;
  try {
    is >> j;
  } catch (const json::parse_error &e) {
    throw std::runtime_error("fixture '" + path + "': " + e.what());
  }
  return warpInputFromJson(j);
}

json statsToJson(const WarpExecStats &s) {
  return json{{"issuedInstructions", s.issuedInstructions},
              {"threadCycles", s.threadCycles},
              {"usefulThreadCycles", s.usefulThreadCycles},
              {"serializedCycles", s.serializedCycles},
              {"utilization", s.utilization},
              {"divergentBranchCount", s.divergentBranchCount},
              {"sharedMemIssues", s.sharedMemIssues},
              {"globalMemIssues", s.globalMemIssues}};
}

json resultToJson(const WarpResult &r) {
  json j;
  j["returns"] = json::array();
  for (const auto &v : r.returns)
    j["returns"].push_back(v ? json(*v) : json(nullptr));
  j["global"] = json::object();
  for (const auto &[name, vals] : r.globalFinal) j["global"][name] = vals;
  j["shared"] = json::object();
  for (const auto &[name, vals] : r.sharedFinal) j["shared"][name] = vals;
  j["stats"] = statsToJson(r.stats);
  j["faults"] = json::array();
  for (const auto &f : r.faults)
    j["faults"].push_back(
        {{"lane", f.lane}, {"block", f.block}, {"message", f.message}});
  j["nonTerminated"] = r.nonTerminated;
  j["taintedObservable"] = r.taintedObservable;
  if (r.taintedObservable) j["taintNote"] = r.taintNote;
  return j;
}

WarpInput makeRandomInput(const Module &m, const Function &f, int warpSize,
                          uint64_t seed) {
  WarpInput in;
  in.warpSize = warpSize;
  in.seed = seed;
  std::mt19937_64 rng(seed);
  auto word = [&] { return int32_t(rng() % 257) - 128; };

  for (const auto &p : f.params) {
    if (!p.empty() && (p[0] == 'j' || p[0] == 'k')) {
      int maxShift = 0;
      while ((1 << (maxShift + 1)) <= warpSize) ++maxShift;
      in.args.push_back({1 << int(rng() % uint64_t(maxShift + 1))});
    } else {
      in.args.push_back({int32_t(rng() % uint64_t(2 * warpSize))});
    }
  }
  for (const auto &g : m.globals) {
    auto &v = in.globalInit[g.name];
    for (int64_t i = 0; i < g.size; ++i) v.push_back(word());
  }
  for (const auto &s : f.sharedDecls) {
    auto &v = in.sharedInit[s.name];
    for (int64_t i = 0; i < s.size; ++i) v.push_back(word());
  }
  return in;
}

}  // namespace darm
