#include "doctest.h"

#include "darm/melding.hpp"
#include "darm/verifier.hpp"
#include "helpers.hpp"

using namespace darm;

namespace {

// Independent frequency-based profitability: latency-weighted overlap of the
// two opcode multisets (phis and terminator included) over total latency.
double oracleMp(const BasicBlock &a, const BasicBlock &b,
                const LatencyModel &lm) {
  auto count = [](const BasicBlock &blk) {
    std::map<Opcode, int64_t> freq;
    for (size_t i = 0; i < blk.phis.size(); ++i) freq[Opcode::Phi]++;
    for (const auto &ins : blk.body) freq[ins.op]++;
    freq[blk.terminator.op]++;
    return freq;
  };
  auto fa = count(a), fb = count(b);
  int64_t shared = 0, total = 0;
  for (const auto &[op, n] : fa) {
    total += n * lm.latency(op);
    auto it = fb.find(op);
    if (it != fb.end()) shared += std::min(n, it->second) * lm.latency(op);
  }
  for (const auto &[op, n] : fb) total += n * lm.latency(op);
  return double(shared) / double(total);
}

Instruction makeIns(Opcode op, int idx) {
  Instruction ins;
  ins.op = op;
  switch (op) {
    case Opcode::LoadShared:
    case Opcode::LoadGlobal:
      ins.result = "v" + std::to_string(idx);
      ins.operands = {Operand::mem("m"), Operand::immediate(idx % 4)};
      break;
    case Opcode::StoreShared:
    case Opcode::StoreGlobal:
      ins.operands = {Operand::mem("m"), Operand::immediate(idx % 4),
                      Operand::immediate(1)};
      break;
    case Opcode::Tid:
      ins.result = "v" + std::to_string(idx);
      break;
    default:
      ins.result = "v" + std::to_string(idx);
      ins.operands = {Operand::immediate(1), Operand::immediate(2)};
      break;
  }
  return ins;
}

BasicBlock randomBlock(std::mt19937_64 &rng, const std::string &name,
                       int maxLen) {
  static const Opcode palette[] = {
      Opcode::Add,        Opcode::Sub,        Opcode::Mul,
      Opcode::Xor,        Opcode::IcmpLt,     Opcode::IcmpGt,
      Opcode::LoadShared, Opcode::LoadGlobal, Opcode::StoreGlobal,
      Opcode::Tid};
  BasicBlock b;
  b.name = name;
  int len = int(rng() % uint64_t(maxLen + 1));
  for (int i = 0; i < len; ++i)
    b.body.push_back(makeIns(palette[rng() % 10], i));
  int phis = int(rng() % 3);
  for (int i = 0; i < phis; ++i) {
    PhiNode p;
    p.result = "p" + std::to_string(i);
    p.incomings = {{Operand::immediate(0), "x"}, {Operand::immediate(1), "y"}};
    b.phis.push_back(p);
  }
  b.terminator.op = Opcode::Br;
  b.terminator.operands = {Operand::label("j")};
  return b;
}

// Random instruction with a random memory name so compatibility matters.
Instruction randomAlignIns(std::mt19937_64 &rng, int idx) {
  static const Opcode palette[] = {Opcode::Add, Opcode::Mul, Opcode::LoadShared,
                                   Opcode::LoadGlobal, Opcode::StoreGlobal};
  Instruction ins = makeIns(palette[rng() % 5], idx);
  if (!ins.operands.empty() && ins.operands[0].isMem())
    ins.operands[0].text = rng() % 2 ? "m1" : "m2";
  return ins;
}

}  // namespace

TEST_CASE("block profitability worked example") {
  LatencyModel lm = LatencyModel::defaults();
  BasicBlock b1, b2;
  b1.name = "b1";
  b1.body = {makeIns(Opcode::Add, 0), makeIns(Opcode::Add, 1),
             makeIns(Opcode::LoadShared, 2)};
  b1.terminator.op = Opcode::Br;
  b1.terminator.operands = {Operand::label("j")};
  b2 = b1;
  b2.name = "b2";
  b2.body = {makeIns(Opcode::Add, 0), makeIns(Opcode::LoadShared, 1),
             makeIns(Opcode::LoadShared, 2)};
  // shared: add(1) + load.shared(20) + br(1) = 22; total 23 + 42 = 65
  CHECK(mpBlock(b1, b2, lm) == doctest::Approx(22.0 / 65.0));
}

TEST_CASE("block profitability properties against the frequency oracle") {
  LatencyModel lm = LatencyModel::defaults();
  std::mt19937_64 rng(31337);
  for (int i = 0; i < 1000; ++i) {
    BasicBlock a = randomBlock(rng, "a", 8);
    BasicBlock b = randomBlock(rng, "b", 8);
    double ab = mpBlock(a, b, lm);
    CHECK(ab >= 0.0);
    CHECK(ab <= 0.5);
    CHECK(ab == doctest::Approx(mpBlock(b, a, lm)));
    CHECK(ab == doctest::Approx(oracleMp(a, b, lm)));
    // identical profiles score exactly the maximum
    CHECK(mpBlock(a, a, lm) == 0.5);
  }
}

TEST_CASE("instruction alignment worked example") {
  LatencyModel lm = LatencyModel::defaults();
  BasicBlock bT, bF;
  bT.name = "t";
  bT.body = {makeIns(Opcode::Add, 0), makeIns(Opcode::LoadShared, 1)};
  bF.name = "f";
  bF.body = {makeIns(Opcode::LoadShared, 0), makeIns(Opcode::Add, 1)};
  bT.terminator.op = bF.terminator.op = Opcode::Br;
  bT.terminator.operands = bF.terminator.operands = {Operand::label("j")};
  InstructionAlignment al = alignInstructions(bT, bF, lm, -1.0);
  // align the loads (20), gap out both adds: 20 - 2
  CHECK(al.score == doctest::Approx(18.0));
  REQUIRE(al.entries.size() == 3);
  int matches = 0;
  for (const auto &e : al.entries)
    if (e.t >= 0 && e.f >= 0) {
      ++matches;
      CHECK(e.t == 1);
      CHECK(e.f == 0);
    }
  CHECK(matches == 1);
}

TEST_CASE("instruction alignment is optimal on random sequences") {
  LatencyModel lm = LatencyModel::defaults();
  std::mt19937_64 rng(404);
  for (int iter = 0; iter < 500; ++iter) {
    BasicBlock bT, bF;
    bT.name = "t";
    bF.name = "f";
    int n = int(rng() % 9), m = int(rng() % 9);
    for (int i = 0; i < n; ++i) bT.body.push_back(randomAlignIns(rng, i));
    for (int j = 0; j < m; ++j) bF.body.push_back(randomAlignIns(rng, j));
    bT.terminator.op = bF.terminator.op = Opcode::Ret;
    InstructionAlignment al = alignInstructions(bT, bF, lm, -1.0);
    double best = testing::oracleAlignScore(bT.body, bF.body, lm, -1.0);
    CHECK(al.score == doctest::Approx(best));
    // entries must be a monotone cover of both sides
    int pt = -1, pf = -1, covT = 0, covF = 0;
    for (const auto &e : al.entries) {
      if (e.t >= 0) {
        CHECK(e.t == pt + 1);
        pt = e.t;
        ++covT;
      }
      if (e.f >= 0) {
        CHECK(e.f == pf + 1);
        pf = e.f;
        ++covF;
      }
    }
    CHECK(covT == n);
    CHECK(covF == m);
  }
}

TEST_CASE("subgraph alignment maximizes total profitability") {
  LatencyModel lm = LatencyModel::defaults();
  MeldConfig cfg;
  std::mt19937_64 rng(808);
  for (int iter = 0; iter < 120; ++iter) {
    // diamond with a random straight chain on each side
    int n = 1 + int(rng() % 4), m = 1 + int(rng() % 4);
    Function f;
    f.name = "g";
    f.params = {"n"};
    BasicBlock e;
    e.name = "e";
    e.body = {Instruction{Opcode::Tid, "t", {}},
              Instruction{Opcode::IcmpLt, "c",
                          {Operand::value("t"), Operand::value("n")}}};
    e.terminator.op = Opcode::CondBr;
    e.terminator.operands = {Operand::value("c"), Operand::label("t0"),
                             Operand::label("f0")};
    f.blocks.push_back(e);
    auto chain = [&](const std::string &pfx, int len) {
      for (int i = 0; i < len; ++i) {
        BasicBlock b = randomBlock(rng, pfx + std::to_string(i), 5);
        b.phis.clear();
        std::string next =
            i + 1 < len ? pfx + std::to_string(i + 1) : std::string("j");
        b.terminator.op = Opcode::Br;
        b.terminator.operands = {Operand::label(next)};
        f.blocks.push_back(b);
      }
    };
    chain("t", n);
    chain("f", m);
    BasicBlock j;
    j.name = "j";
    j.terminator.op = Opcode::Ret;
    f.blocks.push_back(j);

    DomTree dom = computeDominators(f);
    DomTree pdom = computePostDominators(f);
    auto sT = decomposePath(f, "t0", "j", dom, pdom);
    auto sF = decomposePath(f, "f0", "j", dom, pdom);
    REQUIRE(int(sT.size()) == n);
    REQUIRE(int(sF.size()) == m);
    SubgraphAlignment al = alignSubgraphs(f, sT, sF, cfg, lm);

    // exhaustive search over monotone matchings
    std::function<double(size_t, size_t)> best = [&](size_t i,
                                                     size_t jj) -> double {
      if (i == sT.size() || jj == sF.size()) return 0.0;
      double r = std::max(best(i + 1, jj), best(i, jj + 1));
      double s =
          mpBlock(*f.findBlock(sT[i].entry), *f.findBlock(sF[jj].entry), lm);
      r = std::max(r, s + best(i + 1, jj + 1));
      return r;
    };
    CHECK(al.total == doctest::Approx(best(0, 0)));
  }
}

TEST_CASE("meldable region detection on the corpus") {
  auto detect = [](const std::string &name) {
    Module m = testing::loadCorpus(name);
    const Function &f = m.functions[0];
    return detectMeldableRegions(f, analyzeDivergence(f));
  };
  SUBCASE("diamond") {
    auto rs = detect("sb1.ir");
    REQUIRE(rs.size() == 1);
    CHECK(rs[0].entry == "a1");
    CHECK(rs[0].exit == "a4");
    CHECK(rs[0].truePathEntry == "a2");
    CHECK(rs[0].falsePathEntry == "a3");
    CHECK(rs[0].condition == Operand::value("c"));
  }
  SUBCASE("outer region only for bitonic") {
    auto rs = detect("bitonic.ir");
    REQUIRE(rs.size() == 1);
    CHECK(rs[0].entry == "b");
    CHECK(rs[0].exit == "g");
  }
  SUBCASE("uniform branch detects nothing") { CHECK(detect("neg_uniform.ir").empty()); }
  SUBCASE("if-then detects nothing") { CHECK(detect("neg_ifthen.ir").empty()); }
  SUBCASE("barrier in the body detects nothing") {
    CHECK(detect("neg_barrier.ir").empty());
  }
  SUBCASE("empty arm still forms a region; profitability rejects it later") {
    CHECK(detect("neg_emptyarm.ir").size() == 1);
  }
}

TEST_CASE("pair classification") {
  LatencyModel lm = LatencyModel::defaults();
  SUBCASE("single blocks") {
    Module m = testing::loadCorpus("sb1.ir");
    const Function &f = m.functions[0];
    DomTree dom = computeDominators(f), pdom = computePostDominators(f);
    auto sT = decomposePath(f, "a2", "a4", dom, pdom);
    auto sF = decomposePath(f, "a3", "a4", dom, pdom);
    CHECK(classifyMeldable(f, sT[0], sF[0]) == MeldKind::BlockBlock);
  }
  SUBCASE("isomorphic regions") {
    Module m = testing::loadCorpus("sb2.ir");
    const Function &f = m.functions[0];
    DomTree dom = computeDominators(f), pdom = computePostDominators(f);
    auto sT = decomposePath(f, "b2", "b6", dom, pdom);
    auto sF = decomposePath(f, "b3", "b6", dom, pdom);
    CHECK(classifyMeldable(f, sT[0], sF[0]) == MeldKind::RegionRegion);
    std::map<std::string, std::string> mapping;
    REQUIRE(isomorphicSubgraphs(f, sT[0], sF[0], &mapping));
    CHECK(mapping.at("b2") == "b3");
    CHECK(mapping.at("b2a") == "b3a");
    CHECK(mapping.at("b2m") == "b3m");
    double mp = mpSubgraph(f, sT[0], sF[0], mapping, lm);
    CHECK(mp == 0.5);  // structurally identical sides
  }
  SUBCASE("block against region after simplification") {
    Module m = testing::loadCorpus("sb4.ir");
    Function &f = m.functions[0];
    simplifyRegion(f, "d1", "d6");
    DomTree dom = computeDominators(f), pdom = computePostDominators(f);
    std::string bt = f.blocks[0].terminator.operands[1].text;
    std::string bf = f.blocks[0].terminator.operands[2].text;
    auto sT = decomposePath(f, bt, "d6", dom, pdom);
    auto sF = decomposePath(f, bf, "d6", dom, pdom);
    REQUIRE(sT.size() == 1);
    REQUIRE(sF.size() == 1);
    CHECK(classifyMeldable(f, sT[0], sF[0]) == MeldKind::BlockRegion);
    const SeseSubgraph &blockSide = sT[0].isBlock ? sT[0] : sF[0];
    const SeseSubgraph &regionSide = sT[0].isBlock ? sF[0] : sT[0];
    ReplicaPlan plan =
        planReplication(f, *f.findBlock(blockSide.entry), regionSide, lm);
    CHECK(plan.blocks.size() == regionSide.blocks.size());
    CHECK(plan.score > 0.2);
    CHECK(plan.mapping.at(plan.slotReplicaBlock) == plan.slotRegionBlock);
  }
  SUBCASE("shape mismatch is not meldable") {
    // if-then region vs if-else region
    Module m = parseModule(
        "fn g(%n) {\n"
        "^e:\n  %t = tid\n  %c = icmp.lt %t %n\n  condbr %c ^a ^b\n"
        "^a:\n  %x = add %t 1\n  condbr %x ^a1 ^am\n"
        "^a1:\n  %y = add %x 1\n  br ^am\n"
        "^am:\n  %p = phi %y:^a1, %x:^a\n  br ^j\n"
        "^b:\n  %u = add %t 2\n  condbr %u ^b1 ^b2\n"
        "^b1:\n  %v1 = add %u 1\n  br ^bm\n"
        "^b2:\n  %v2 = add %u 2\n  br ^bm\n"
        "^bm:\n  %q = phi %v1:^b1, %v2:^b2\n  br ^j\n"
        "^j:\n  ret\n}\n");
    const Function &f = m.functions[0];
    DomTree dom = computeDominators(f), pdom = computePostDominators(f);
    auto sT = decomposePath(f, "a", "j", dom, pdom);
    auto sF = decomposePath(f, "b", "j", dom, pdom);
    REQUIRE(sT.size() == 1);
    REQUIRE(sF.size() == 1);
    CHECK(!isomorphicSubgraphs(f, sT[0], sF[0], nullptr));
    CHECK(classifyMeldable(f, sT[0], sF[0]) == MeldKind::NotMeldable);
  }
}

TEST_CASE("subgraph profitability rejects broken mappings") {
  LatencyModel lm = LatencyModel::defaults();
  Module m = testing::loadCorpus("sb2.ir");
  const Function &f = m.functions[0];
  DomTree dom = computeDominators(f), pdom = computePostDominators(f);
  auto sT = decomposePath(f, "b2", "b6", dom, pdom);
  auto sF = decomposePath(f, "b3", "b6", dom, pdom);
  std::map<std::string, std::string> bad = {
      {"b2", "b3"}, {"b2a", "b3"}, {"b2m", "b3m"}};
  CHECK_THROWS(mpSubgraph(f, sT[0], sF[0], bad, lm));
  CHECK_THROWS(mpSubgraph(f, sT[0], sF[0], {}, lm));
}

TEST_CASE("select insertion counts distinct operand pairs once") {
  LatencyModel lm = LatencyModel::defaults();
  MeldConfig cfg;
  auto meldCount = [&](const std::string &tBody, const std::string &fBody) {
    Module m = parseModule(
        "fn g(%a,%b,%c,%d,%n) {\n"
        "^e:\n  %t = tid\n  %cc = icmp.lt %t %n\n  condbr %cc ^tb ^fb\n"
        "^tb:\n" + tBody + "  br ^j\n"
        "^fb:\n" + fBody + "  br ^j\n"
        "^j:\n  ret\n}\n");
    Function &f = m.functions[0];
    DomTree dom = computeDominators(f), pdom = computePostDominators(f);
    auto sT = decomposePath(f, "tb", "j", dom, pdom);
    auto sF = decomposePath(f, "fb", "j", dom, pdom);
    MeldOutcome out = meldSubgraphs(f, sT[0], sF[0], Operand::value("cc"),
                                    MeldKind::BlockBlock, cfg, lm);
    CHECK(verifySsa(f).empty());
    return out.selectsInserted;
  };
  // both operand pairs differ
  CHECK(meldCount("  %r1 = add %a %b\n", "  %r2 = add %c %d\n") == 2);
  // a shared first operand needs no select
  CHECK(meldCount("  %r1 = add %a %b\n", "  %r2 = add %a %d\n") == 1);
  // a repeated operand pair reuses the cached select
  CHECK(meldCount("  %r1 = add %a %b\n  %s1 = add %a %b\n",
                  "  %r2 = add %c %d\n  %s2 = add %c %d\n") == 2);
}

TEST_CASE("preprocessing without outward uses leaves the function alone") {
  Module m = testing::loadCorpus("sb1.ir");
  Function &f = m.functions[0];
  Function before = f;
  DomTree dom = computeDominators(f), pdom = computePostDominators(f);
  auto sT = decomposePath(f, "a2", "a4", dom, pdom);
  auto sF = decomposePath(f, "a3", "a4", dom, pdom);
  CHECK(!preprocessSubgraphs(f, sT[0], sF[0], Operand::value("c")));
  CHECK(f == before);
}
