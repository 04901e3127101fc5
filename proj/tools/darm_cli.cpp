#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"

#include "darm/dot.hpp"
#include "darm/fixtures.hpp"
#include "darm/interp.hpp"
#include "darm/melding.hpp"
#include "darm/parser.hpp"
#include "darm/verifier.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace darm;

namespace {

constexpr int kOk = 0;
constexpr int kUserError = 2;
constexpr int kInternalError = 3;

void writeFile(const std::string &path, const std::string &text) {
  // Write to a temp file first so readers never see partial output.
  std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp);
    if (!os) throw std::runtime_error("cannot write '" + path + "'");
    os << text;
  }
  fs::rename(tmp, path);
}

LatencyModel loadLatencies(const std::string &path) {
  return path.empty() ? LatencyModel::defaults() : LatencyModel::fromFile(path);
}

std::vector<Function *> selectFunctions(Module &m, const std::string &name) {
  std::vector<Function *> out;
  if (name.empty()) {
    for (auto &f : m.functions) out.push_back(&f);
  } else {
    Function *f = m.findFunction(name);
    if (!f) throw std::runtime_error("no function named '" + name + "'");
    out.push_back(f);
  }
  return out;
}

json reportToJson(const MeldReport &rep) {
  json melds = json::array();
  for (const auto &a : rep.melds)
    melds.push_back({{"regionEntry", a.regionEntry},
                     {"regionExit", a.regionExit},
                     {"kind", a.kind},
                     {"mpScore", a.mpScore},
                     {"iteration", a.iteration},
                     {"blocksMelded", a.blocksMelded},
                     {"selectsInserted", a.selectsInserted},
                     {"unpredicatedRuns", a.unpredicatedRuns}});
  return json{{"function", rep.function},
              {"iterations", rep.iterations},
              {"converged", rep.converged},
              {"melds", melds}};
}

json candidatesToJson(const std::string &fn,
                      const std::vector<CandidateTuple> &cs) {
  json arr = json::array();
  for (const auto &c : cs)
    arr.push_back({{"regionEntry", c.regionEntry},
                   {"regionExit", c.regionExit},
                   {"trueEntry", c.trueEntry},
                   {"falseEntry", c.falseEntry},
                   {"kind", c.kind},
                   {"score", c.score}});
  return json{{"function", fn}, {"candidates", arr}};
}

int cmdMeld(const std::string &input, const std::string &output,
            const std::string &reportPath, const std::string &dotBefore,
            const std::string &dotAfter, const std::string &latFile,
            const std::string &fnName, const std::string &mode,
            double threshold, bool analysisOnly, bool runOnce) {
  Module m = parseModuleFile(input);
  auto pre = verifyModule(m);
  if (!pre.empty()) {
    for (const auto &v : pre)
      std::cerr << input << ": ^" << v.block << ": " << v.message << "\n";
    return kUserError;
  }
  LatencyModel lm = loadLatencies(latFile);
  MeldConfig cfg;
  cfg.threshold = threshold;
  cfg.runOnce = runOnce;
  cfg.branchFusionOnly = mode == "branch-fusion";

  auto fns = selectFunctions(m, fnName);
  if (!dotBefore.empty()) {
    std::string dot;
    for (const auto *f : fns) dot += emitDot(*f, DotLabelMode::FullInstructions);
    writeFile(dotBefore, dot);
  }

  json report = json::array();
  for (auto *f : fns) {
    if (analysisOnly) {
      report.push_back(candidatesToJson(f->name,
                                        firstIterationCandidates(*f, cfg, lm)));
      continue;
    }
    MeldReport rep = runDarm(*f, cfg, lm);
    auto post = verifySsa(*f);
    if (!post.empty()) {
      for (const auto &v : post)
        std::cerr << f->name << ": ^" << v.block << ": " << v.message << "\n";
      return kInternalError;
    }
    report.push_back(reportToJson(rep));
  }

  if (!dotAfter.empty()) {
    std::string dot;
    for (const auto *f : fns) dot += emitDot(*f, DotLabelMode::FullInstructions);
    writeFile(dotAfter, dot);
  }
  if (!analysisOnly) {
    if (output.empty())
      std::cout << printModule(m);
    else
      writeFile(output, printModule(m));
  }
  if (!reportPath.empty())
    writeFile(reportPath, report.dump(2) + "\n");
  else if (analysisOnly || !output.empty())
    std::cout << report.dump(2) << "\n";
  return kOk;
}

int cmdSimulate(const std::string &input, const std::string &comparePath,
                const std::string &fixturePath, const std::string &latFile,
                const std::string &fnName, int warp, uint64_t seed,
                int64_t maxSteps, const std::string &outPath) {
  Module m = parseModuleFile(input);
  auto viol = verifyModule(m);
  if (!viol.empty()) {
    for (const auto &v : viol)
      std::cerr << input << ": ^" << v.block << ": " << v.message << "\n";
    return kUserError;
  }
  if (m.functions.empty()) throw std::runtime_error("module has no functions");
  const Function &f =
      fnName.empty() ? m.functions.front() : *[&]() -> const Function * {
        const Function *p = m.findFunction(fnName);
        if (!p) throw std::runtime_error("no function named '" + fnName + "'");
        return p;
      }();
  LatencyModel lm = loadLatencies(latFile);
  WarpInput in = fixturePath.empty() ? makeRandomInput(m, f, warp, seed)
                                     : loadWarpInput(fixturePath);

  WarpResult res = executeWarp(m, f, in, lm, maxSteps);
  json out;
  out["input"] = warpInputToJson(in);
  out["result"] = resultToJson(res);
  int rc = res.nonTerminated ? kUserError : kOk;

  if (!comparePath.empty()) {
    Module m2 = parseModuleFile(comparePath);
    const Function *f2 = m2.findFunction(f.name);
    if (!f2)
      throw std::runtime_error("'" + comparePath + "' has no function '" +
                               f.name + "'");
    WarpResult res2 = executeWarp(m2, *f2, in, lm, maxSteps);
    CompareVerdict v = compareRuns(res, res2);
    out["compareResult"] = resultToJson(res2);
    out["verdict"] = json{{"equal", v.equal}, {"diff", v.diff}};
    if (!v.equal) rc = kUserError;
  }
  if (outPath.empty())
    std::cout << out.dump(2) << "\n";
  else
    writeFile(outPath, out.dump(2) + "\n");
  return rc;
}

struct BenchRow {
  std::string kernel;
  std::string mode;
  double threshold = 0.0;
  bool rejected = false;      // pass refused the input (e.g. several returns)
  bool oracleOk = true;
  std::string oracleDiff;
  int melds = 0;
  bool converged = true;
  std::vector<double> mpScores;
  double serializedBefore = 0.0;
  double serializedAfter = 0.0;
  double utilBefore = 1.0;
  double utilAfter = 1.0;
};

double reductionPercent(double before, double after) {
  if (before <= 0.0) return 0.0;
  return 100.0 * (before - after) / before;
}

BenchRow benchOne(const Module &m, const std::string &kernel,
                  const std::string &mode, double threshold,
                  const LatencyModel &lm, int fixtures, uint64_t seed,
                  int warp) {
  BenchRow row;
  row.kernel = kernel;
  row.mode = mode;
  row.threshold = threshold;

  Module melded = m;
  MeldConfig cfg;
  cfg.threshold = threshold;
  cfg.branchFusionOnly = mode == "branch-fusion";
  try {
    for (auto &f : melded.functions) {
      MeldReport rep = runDarm(f, cfg, lm);
      row.melds += static_cast<int>(rep.melds.size());
      row.converged = row.converged && rep.converged;
      for (const auto &a : rep.melds) row.mpScores.push_back(a.mpScore);
      auto viol = verifySsa(f);
      if (!viol.empty())
        throw std::logic_error("transform broke SSA in " + f.name + ": " +
                               viol.front().message);
    }
  } catch (const std::logic_error &) {
    throw;
  } catch (const std::exception &) {
    row.rejected = true;
    melded = m;
  }

  if (row.rejected) return row;  // reconvergence needs a unique ret too

  const Function &f0 = m.functions.front();
  const Function &f1 = melded.functions.front();
  double sb = 0, sa = 0, ub = 0, ua = 0;
  for (int i = 0; i < fixtures; ++i) {
    WarpInput in = makeRandomInput(m, f0, warp, seed + i);
    WarpResult before = executeWarp(m, f0, in, lm);
    WarpResult after = executeWarp(melded, f1, in, lm);
    CompareVerdict v = compareRuns(before, after);
    if (!v.equal && row.oracleOk) {
      row.oracleOk = false;
      row.oracleDiff = v.diff;
    }
    sb += double(before.stats.serializedCycles);
    sa += double(after.stats.serializedCycles);
    ub += before.stats.utilization;
    ua += after.stats.utilization;
  }
  row.serializedBefore = sb / fixtures;
  row.serializedAfter = sa / fixtures;
  row.utilBefore = ub / fixtures;
  row.utilAfter = ua / fixtures;
  return row;
}

int cmdBench(const std::string &dir, const std::string &latFile,
             const std::vector<double> &thresholds, int fixtures,
             uint64_t seed, int warp, int workers,
             const std::string &jsonPath) {
  LatencyModel lm = loadLatencies(latFile);
  std::vector<std::string> files;
  for (const auto &e : fs::directory_iterator(dir))
    if (e.path().extension() == ".ir") files.push_back(e.path().string());
  std::sort(files.begin(), files.end());
  if (files.empty()) {
    std::cerr << "no .ir files in '" << dir << "'\n";
    return kUserError;
  }

  struct Job {
    std::string file;
    std::string mode;
    double threshold;
  };
  std::vector<Job> jobs;
  for (const auto &f : files)
    for (const std::string mode : {"darm", "branch-fusion"})
      for (double t : thresholds) jobs.push_back({f, mode, t});

  std::vector<BenchRow> rows(jobs.size());
  std::atomic<size_t> next{0};
  std::mutex errMutex;
  std::vector<std::string> errors;
  auto work = [&] {
    for (;;) {
      size_t i = next.fetch_add(1);
      if (i >= jobs.size()) return;
      const Job &j = jobs[i];
      try {
        Module m = parseModuleFile(j.file);
        rows[i] = benchOne(m, fs::path(j.file).stem().string(), j.mode,
                           j.threshold, lm, fixtures, seed, warp);
      } catch (const std::exception &e) {
        std::lock_guard<std::mutex> lk(errMutex);
        errors.push_back(j.file + ": " + e.what());
      }
    }
  };
  if (workers < 1) workers = 1;
  std::vector<std::thread> pool;
  for (int i = 1; i < workers; ++i) pool.emplace_back(work);
  work();
  for (auto &t : pool) t.join();

  if (!errors.empty()) {
    for (const auto &e : errors) std::cerr << e << "\n";
    return kInternalError;
  }

  json out = json::array();
  bool oracleFailed = false;
  std::string failedKernel;
  printf("%-14s %-13s %5s  %-8s %5s  %9s %9s %7s  %5s %5s\n", "kernel", "mode",
         "thr", "status", "melds", "ser.pre", "ser.post", "red%", "u.pre",
         "u.post");
  for (const auto &r : rows) {
    std::string status = r.rejected ? "rejected" : (r.melds > 0 ? "melded" : "no-meld");
    if (!r.oracleOk) {
      status = "ORACLE-FAIL";
      oracleFailed = true;
      if (failedKernel.empty()) failedKernel = r.kernel;
    }
    printf("%-14s %-13s %5.2f  %-8s %5d  %9.1f %9.1f %6.1f%%  %5.3f %5.3f\n",
           r.kernel.c_str(), r.mode.c_str(), r.threshold, status.c_str(),
           r.melds, r.serializedBefore, r.serializedAfter,
           reductionPercent(r.serializedBefore, r.serializedAfter),
           r.utilBefore, r.utilAfter);
    out.push_back({{"kernel", r.kernel},
                   {"mode", r.mode},
                   {"threshold", r.threshold},
                   {"rejected", r.rejected},
                   {"melded", r.melds > 0},
                   {"melds", r.melds},
                   {"converged", r.converged},
                   {"mpScores", r.mpScores},
                   {"oracleOk", r.oracleOk},
                   {"oracleDiff", r.oracleDiff},
                   {"serializedBefore", r.serializedBefore},
                   {"serializedAfter", r.serializedAfter},
                   {"serializedReductionPercent",
                    reductionPercent(r.serializedBefore, r.serializedAfter)},
                   {"utilizationBefore", r.utilBefore},
                   {"utilizationAfter", r.utilAfter}});
  }
  if (!jsonPath.empty()) writeFile(jsonPath, out.dump(2) + "\n");
  if (oracleFailed) {
    std::cerr << "oracle failure on kernel '" << failedKernel << "'\n";
    return kInternalError;
  }
  return kOk;
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"control-flow melding toolkit"};
  app.require_subcommand(1);

  // meld
  std::string input, output, reportPath, dotBefore, dotAfter, latFile, fnName;
  std::string mode = "darm";
  double threshold = 0.2;
  bool analysisOnly = false, runOnce = false;
  auto *meld = app.add_subcommand("meld", "transform a module");
  meld->add_option("input", input, "input IR file")->required();
  meld->add_option("-o,--output", output, "transformed IR path (default stdout)");
  meld->add_option("--report", reportPath, "meld report JSON path");
  meld->add_option("--threshold", threshold, "profitability cutoff in [0, 0.5]");
  meld->add_flag("--analysis-only", analysisOnly,
                 "report opportunities without rewriting");
  meld->add_option("--function", fnName, "restrict to one function");
  meld->add_flag("--run-once", runOnce, "stop after the first meld");
  meld->add_option("--mode", mode, "darm | branch-fusion")
      ->check(CLI::IsMember({"darm", "branch-fusion"}));
  meld->add_option("--dot-before", dotBefore, "CFG dot of the input");
  meld->add_option("--dot-after", dotAfter, "CFG dot of the result");
  meld->add_option("--latency-model", latFile, "key=value latency overrides");

  // simulate
  std::string simInput, simCompare, fixturePath, simLat, simFn, simOut;
  int warp = 32;
  uint64_t seed = 1;
  int64_t maxSteps = 10000000;
  auto *sim = app.add_subcommand("simulate", "run one warp");
  sim->add_option("input", simInput, "IR file")->required();
  sim->add_option("--fixture", fixturePath, "JSON fixture (default: random)");
  sim->add_option("--compare", simCompare,
                  "second IR file; emit equivalence verdict");
  sim->add_option("--function", simFn, "function to run (default: first)");
  sim->add_option("--warp", warp, "warp size for random inputs");
  sim->add_option("--seed", seed, "seed for random inputs");
  sim->add_option("--max-steps", maxSteps, "issue budget before giving up");
  sim->add_option("--latency-model", simLat, "key=value latency overrides");
  sim->add_option("-o,--output", simOut, "stats JSON path (default stdout)");

  // bench
  std::string benchDir, benchLat, benchJson;
  std::vector<double> thresholds{0.2};
  int fixtures = 20;
  uint64_t benchSeed = 1;
  int benchWarp = 32;
  int workers = int(std::thread::hardware_concurrency());
  auto *bench = app.add_subcommand("bench", "run the kernel corpus");
  bench->add_option("dir", benchDir, "corpus directory")->required();
  bench->add_option("--thresholds", thresholds, "thresholds to sweep");
  bench->add_option("--fixtures", fixtures, "random fixtures per kernel");
  bench->add_option("--seed", benchSeed, "fixture seed");
  bench->add_option("--warp", benchWarp, "warp size");
  bench->add_option("--workers", workers, "worker threads");
  bench->add_option("--json", benchJson, "summary JSON path");
  bench->add_option("--latency-model", benchLat, "key=value latency overrides");

  CLI11_PARSE(app, argc, argv);

  try {
    if (meld->parsed())
      return cmdMeld(input, output, reportPath, dotBefore, dotAfter, latFile,
                     fnName, mode, threshold, analysisOnly, runOnce);
    if (sim->parsed())
      return cmdSimulate(simInput, simCompare, fixturePath, simLat, simFn, warp,
                         seed, maxSteps, simOut);
    if (bench->parsed())
      return cmdBench(benchDir, benchLat, thresholds, fixtures, benchSeed,
                      benchWarp, workers, benchJson);
  } catch (const std::logic_error &e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kInternalError;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUserError;
  }
  return kOk;
}
