#include "doctest.h"

#include "darm/fixtures.hpp"
#include "darm/interp.hpp"
#include "helpers.hpp"

using namespace darm;

namespace {

WarpResult run1(const std::string &src, std::vector<int32_t> args = {}) {
  Module m = parseModule(src);
  WarpInput in;
  in.warpSize = 1;
  for (int32_t a : args) in.args.push_back({a});
  return executeWarp(m, m.functions[0], in, LatencyModel::defaults());
}

}  // namespace

TEST_CASE("arithmetic wraps around and shifts mask the amount") {
  auto r = run1("fn f(%a,%b) {\n^e:\n  %x = add %a %b\n  ret %x\n}\n",
                {2147483647, 1});
  REQUIRE(r.returns[0].has_value());
  CHECK(*r.returns[0] == INT32_MIN);

  r = run1("fn f(%a,%b) {\n^e:\n  %x = shl %a %b\n  ret %x\n}\n", {1, 33});
  CHECK(*r.returns[0] == 2);  // 33 & 31 == 1

  r = run1("fn f(%a,%b) {\n^e:\n  %x = shr %a %b\n  ret %x\n}\n", {-8, 1});
  CHECK(*r.returns[0] == 2147483644);  // logical shift

  r = run1("fn f(%a,%b) {\n^e:\n  %x = div %a %b\n  ret %x\n}\n", {-7, 2});
  CHECK(*r.returns[0] == -3);  // trunc toward zero

  r = run1("fn f(%a,%b) {\n^e:\n  %x = rem %a %b\n  ret %x\n}\n", {-7, 2});
  CHECK(*r.returns[0] == -1);
}

TEST_CASE("division by zero faults the lane") {
  auto r = run1("fn f(%a) {\n^e:\n  %x = div 1 %a\n  ret %x\n}\n", {0});
  REQUIRE(r.faults.size() == 1);
  CHECK(r.faults[0].lane == 0);
  CHECK(!r.returns[0].has_value());
  CHECK(!r.nonTerminated);
}

TEST_CASE("out-of-bounds access faults the lane") {
  Module m = parseModule(
      "global out[4]\nfn f(%a) {\n^e:\n  store.global out %a 1\n  ret\n}\n");
  WarpInput in;
  in.warpSize = 2;
  in.args = {{1, 99}};
  WarpResult r = executeWarp(m, m.functions[0], in, LatencyModel::defaults());
  REQUIRE(r.faults.size() == 1);
  CHECK(r.faults[0].lane == 1);
  CHECK(r.globalFinal.at("out")[1] == 1);  // lane 0's store still lands
}

TEST_CASE("stores from multiple lanes land in ascending lane order") {
  Module m = parseModule(
      "global out[4]\nfn f() {\n^e:\n  %t = tid\n  store.global out 0 %t\n  ret\n}\n");
  WarpInput in;
  in.warpSize = 4;
  WarpResult r = executeWarp(m, m.functions[0], in, LatencyModel::defaults());
  CHECK(r.globalFinal.at("out")[0] == 3);
}

TEST_CASE("undef observability") {
  // returning an undef-derived value is observable taint
  auto r = run1("fn f() {\n^e:\n  %x = add undef 1\n  ret %x\n}\n");
  CHECK(r.taintedObservable);
  // a select that picks the clean side discards the taint
  r = run1("fn f() {\n^e:\n  %x = select 1 7 undef\n  ret %x\n}\n");
  CHECK(!r.taintedObservable);
  REQUIRE(r.returns[0].has_value());
  CHECK(*r.returns[0] == 7);
  // unused taint is fine
  r = run1("fn f() {\n^e:\n  %x = add undef 1\n  ret 3\n}\n");
  CHECK(!r.taintedObservable);
}

TEST_CASE("barrier is a scheduling no-op") {
  auto r = run1("fn f() {\n^e:\n  barrier\n  ret 5\n}\n");
  CHECK(*r.returns[0] == 5);
  CHECK(r.faults.empty());
}

TEST_CASE("divergent diamond reconverges at the post-dominator") {
  Module m = parseModule(
      "fn f(%n) {\n^e:\n  %t = tid\n  %c = icmp.lt %t %n\n  condbr %c ^a ^b\n"
      "^a:\n  %x = mul %t 2\n  br ^j\n"
      "^b:\n  %y = add %t 100\n  br ^j\n"
      "^j:\n  %p = phi %x:^a, %y:^b\n  ret %p\n}\n");
  WarpInput in;
  in.warpSize = 4;
  in.args = {{2}};
  WarpResult r = executeWarp(m, m.functions[0], in, LatencyModel::defaults());
  CHECK(*r.returns[0] == 0);
  CHECK(*r.returns[1] == 2);
  CHECK(*r.returns[2] == 102);
  CHECK(*r.returns[3] == 103);
  CHECK(r.stats.divergentBranchCount == 1);
}

TEST_CASE("utilization accounting on an even split") {
  // entry: tid, icmp, condbr issue under a full mask; each arm holds one
  // mul under a half mask; the join ret is full again.
  Module m = parseModule(
      "fn f(%n) {\n^e:\n  %t = tid\n  %c = icmp.lt %t %n\n  condbr %c ^a ^b\n"
      "^a:\n  %x = mul %t 2\n  br ^j\n"
      "^b:\n  %y = mul %t 3\n  br ^j\n"
      "^j:\n  %p = phi %x:^a, %y:^b\n  ret %p\n}\n");
  WarpInput in;
  in.warpSize = 32;
  in.args = {{16}};
  WarpResult r = executeWarp(m, m.functions[0], in, LatencyModel::defaults());
  // full mask: tid+icmp+condbr+phi+ret = 5 cycles; each arm's mul+br run
  // under a half mask, 2 cycles per arm
  int64_t thread = (5 + 4) * 32;
  int64_t useful = 5 * 32 + 4 * 16;
  CHECK(r.stats.threadCycles == thread);
  CHECK(r.stats.usefulThreadCycles == useful);
  CHECK(r.stats.serializedCycles == thread - useful);
  CHECK(r.stats.utilization == doctest::Approx(double(useful) / double(thread)));
}

TEST_CASE("no divergence means full utilization") {
  Module m = testing::loadCorpus("sb1.ir");
  WarpInput in = makeRandomInput(m, m.functions[0], 1, 5);
  WarpResult r = executeWarp(m, m.functions[0], in, LatencyModel::defaults());
  CHECK(r.stats.utilization == doctest::Approx(1.0));
  CHECK(r.stats.serializedCycles == 0);
  CHECK(r.stats.divergentBranchCount == 0);
}

TEST_CASE("memory issue counters") {
  Module m = parseModule(
      "global g[8]\nfn f(%a) shared s[8] {\n^e:\n"
      "  %v = load.global g %a\n  store.shared s %a %v\n"
      "  %w = load.shared s %a\n  store.global g %a %w\n  ret\n}\n");
  WarpInput in;
  in.warpSize = 4;
  in.args = {{1}};
  WarpResult r = executeWarp(m, m.functions[0], in, LatencyModel::defaults());
  CHECK(r.stats.sharedMemIssues == 2);
  CHECK(r.stats.globalMemIssues == 2);
}

TEST_CASE("non-terminating loop is reported, not hung") {
  Module m = parseModule(
      "fn f(%a) {\n^e:\n  condbr %a ^e ^x\n^x:\n  ret\n}\n");
  WarpInput in;
  in.warpSize = 2;
  in.args = {{1}};
  WarpResult r = executeWarp(m, m.functions[0], in, LatencyModel::defaults(), 100);
  CHECK(r.nonTerminated);
  WarpResult ok = run1("fn f() {\n^e:\n  ret 1\n}\n");
  CHECK(!compareRuns(r, ok).equal);
}

TEST_CASE("compareRuns flags the first difference") {
  auto a = run1("fn f() {\n^e:\n  ret 1\n}\n");
  auto b = run1("fn f() {\n^e:\n  ret 2\n}\n");
  CHECK(compareRuns(a, a).equal);
  auto v = compareRuns(a, b);
  CHECK(!v.equal);
  CHECK(!v.diff.empty());

  Module m = parseModule(
      "global out[2]\nfn f(%x) {\n^e:\n  store.global out 0 %x\n  ret\n}\n");
  WarpInput in;
  in.warpSize = 1;
  in.args = {{1}};
  auto g1 = executeWarp(m, m.functions[0], in, LatencyModel::defaults());
  in.args = {{2}};
  auto g2 = executeWarp(m, m.functions[0], in, LatencyModel::defaults());
  CHECK(!compareRuns(g1, g2).equal);
}

TEST_CASE("fixture json round trip and deterministic generation") {
  Module m = testing::loadCorpus("bitonic.ir");
  WarpInput in = makeRandomInput(m, m.functions[0], 32, 42);
  WarpInput back = warpInputFromJson(warpInputToJson(in));
  CHECK(back.warpSize == in.warpSize);
  CHECK(back.args == in.args);
  CHECK(back.globalInit == in.globalInit);
  CHECK(back.sharedInit == in.sharedInit);

  WarpInput again = makeRandomInput(m, m.functions[0], 32, 42);
  CHECK(again.args == in.args);
  CHECK(again.globalInit == in.globalInit);

  // %k gets a power of two <= warpSize so xor-pairing kernels stay race free
  REQUIRE(!in.args.empty());
  REQUIRE(in.args[0].size() == 1);
  int32_t k = in.args[0][0];
  CHECK(k >= 1);
  CHECK(k <= 32);
  CHECK((k & (k - 1)) == 0);
}
