#include "doctest.h"

#include "darm/melding.hpp"
#include "darm/verifier.hpp"
#include "helpers.hpp"

using namespace darm;

TEST_CASE("verifier accepts the corpus") {
  for (const auto &name : testing::positiveKernels())
    CHECK_MESSAGE(verifyModule(testing::loadCorpus(name)).empty(), name);
  for (const auto &name : testing::negativeKernels())
    CHECK_MESSAGE(verifyModule(testing::loadCorpus(name)).empty(), name);
}

TEST_CASE("verifier catches broken SSA") {
  SUBCASE("use without a dominating definition") {
    Module m = testing::loadCorpus("sb1.ir");
    Function &f = m.functions[0];
    // reference a value from the sibling arm
    f.findBlock("a3")->body[1].operands[0] = Operand::value("m2");
    auto v = verifySsa(f);
    REQUIRE(!v.empty());
    CHECK(v[0].value == "m2");
  }
  SUBCASE("unknown value") {
    Module m = testing::loadCorpus("sb1.ir");
    m.functions[0].findBlock("a4")->terminator.operands = {
        Operand::value("ghost")};
    CHECK(!verifySsa(m.functions[0]).empty());
  }
  SUBCASE("phi missing a predecessor") {
    Module m = testing::loadCorpus("sb2.ir");
    Function &f = m.functions[0];
    f.findBlock("b2m")->phis[0].incomings.pop_back();
    CHECK(!verifySsa(f).empty());
  }
  SUBCASE("unreachable block") {
    Module m = testing::loadCorpus("sb1.ir");
    BasicBlock orphan;
    orphan.name = "orphan";
    orphan.terminator.op = Opcode::Br;
    orphan.terminator.operands = {Operand::label("a4")};
    m.functions[0].blocks.push_back(orphan);
    CHECK(!verifySsa(m.functions[0]).empty());
  }
}

TEST_CASE("ssa repair inserts frontier phis") {
  Module m = parseModule(
      "fn g(%n) {\n"
      "^e:\n  %t = tid\n  %c = icmp.lt %t %n\n  condbr %c ^d ^s\n"
      "^d:\n  %x = add %t 1\n  br ^j\n"
      "^s:\n  br ^j\n"
      "^j:\n  %y = add %x 2\n  ret %y\n}\n");
  Function &f = m.functions[0];
  CHECK(!verifySsa(f).empty());  // %x does not dominate its use in ^j
  repairSsa(f, "x", "d");
  CHECK(verifySsa(f).empty());
  const BasicBlock *j = f.findBlock("j");
  REQUIRE(j->phis.size() == 1);
  bool sawDef = false, sawUndef = false;
  for (const auto &[v, p] : j->phis[0].incomings) {
    if (p == "d") {
      CHECK(v == Operand::value("x"));
      sawDef = true;
    }
    if (p == "s") {
      CHECK(v.kind == Operand::Kind::Undef);
      sawUndef = true;
    }
  }
  CHECK(sawDef);
  CHECK(sawUndef);
  CHECK(j->body[0].operands[0] == Operand::value(j->phis[0].result));
}

TEST_CASE("post-optimization") {
  SUBCASE("folds a branch with identical targets") {
    Module m = parseModule(
        "fn g(%n) {\n"
        "^e:\n  %t = tid\n  condbr %t ^a ^a\n"
        "^a:\n  %x = add %t 1\n  br ^j\n"
        "^j:\n  ret %x\n}\n");
    Function &f = m.functions[0];
    CHECK(postOptimize(f));
    CHECK(f.blocks.size() == 1);
    CHECK(f.blocks[0].terminator.op == Opcode::Ret);
    CHECK(verifySsa(f).empty());
  }
  SUBCASE("drops dead pure code but keeps faulting and memory ops") {
    Module m = parseModule(
        "global g[4]\n"
        "fn h(%a) {\n^e:\n  %dead = mul %a 3\n  %d2 = div %a 0\n"
        "  %v = load.global g %a\n  ret %a\n}\n");
    Function &f = m.functions[0];
    CHECK(postOptimize(f));
    REQUIRE(f.blocks[0].body.size() == 2);
    CHECK(f.blocks[0].body[0].op == Opcode::Div);
    CHECK(f.blocks[0].body[1].op == Opcode::LoadGlobal);
  }
  SUBCASE("idempotent and semantics preserving on melded kernels") {
    LatencyModel lm = LatencyModel::defaults();
    MeldConfig cfg;
    for (const auto &name : testing::positiveKernels()) {
      Module orig = testing::loadCorpus(name);
      Module m = orig;
      Function &f = m.functions[0];
      runDarm(f, cfg, lm);
      CHECK_MESSAGE(!postOptimize(f), name);  // the driver already cleans up
      std::string diff = testing::oracleCompare(orig, orig.functions[0], m, f,
                                                3, 7, {8});
      CHECK_MESSAGE(diff.empty(), name << ": " << diff);
    }
  }
  SUBCASE("single straight-line block is already minimal") {
    Module m = parseModule("fn g(%a) {\n^e:\n  %x = add %a 1\n  ret %x\n}\n");
    CHECK(!postOptimize(m.functions[0]));
  }
}

TEST_CASE("driver configuration is validated") {
  Module m = testing::loadCorpus("sb1.ir");
  LatencyModel lm = LatencyModel::defaults();
  MeldConfig cfg;
  cfg.threshold = 0.6;
  CHECK_THROWS_AS(runDarm(m.functions[0], cfg, lm), std::invalid_argument);
  cfg.threshold = -0.1;
  CHECK_THROWS_AS(runDarm(m.functions[0], cfg, lm), std::invalid_argument);
  cfg.threshold = 0.2;
  cfg.maxIterations = 0;
  CHECK_THROWS_AS(runDarm(m.functions[0], cfg, lm), std::invalid_argument);
}

TEST_CASE("driver melds the positive corpus and leaves negatives alone") {
  LatencyModel lm = LatencyModel::defaults();
  MeldConfig cfg;
  SUBCASE("positives meld and stay valid") {
    for (const auto &name : testing::positiveKernels()) {
      Module m = testing::loadCorpus(name);
      Function &f = m.functions[0];
      MeldReport r = runDarm(f, cfg, lm);
      CHECK_MESSAGE(!r.melds.empty(), name);
      CHECK_MESSAGE(r.converged, name);
      CHECK_MESSAGE(verifySsa(f).empty(), name);
      for (const auto &a : r.melds) CHECK(a.mpScore >= cfg.threshold);
    }
  }
  SUBCASE("negatives are untouched") {
    for (const auto &name : testing::negativeKernels()) {
      if (name == "neg_multiret.ir") continue;
      Module m = testing::loadCorpus(name);
      Function before = m.functions[0];
      MeldReport r = runDarm(m.functions[0], cfg, lm);
      CHECK_MESSAGE(r.melds.empty(), name);
      CHECK_MESSAGE(m.functions[0] == before, name);
    }
  }
  SUBCASE("several returns are rejected up front") {
    Module m = testing::loadCorpus("neg_multiret.ir");
    CHECK_THROWS(runDarm(m.functions[0], cfg, lm));
  }
  SUBCASE("runOnce performs at most one meld") {
    Module m = testing::loadCorpus("sb3.ir");
    MeldConfig once = cfg;
    once.runOnce = true;
    MeldReport r = runDarm(m.functions[0], once, lm);
    CHECK(r.melds.size() == 1);
  }
  SUBCASE("nested diamonds need two melds") {
    Module m = testing::loadCorpus("nested.ir");
    MeldReport r = runDarm(m.functions[0], cfg, lm);
    CHECK(r.melds.size() == 2);
  }
  SUBCASE("a strict threshold keeps dissimilar arms apart") {
    MeldConfig strict = cfg;
    strict.threshold = 0.5;
    Module m = testing::loadCorpus("sb1r.ir");
    CHECK(runDarm(m.functions[0], strict, lm).melds.empty());
    Module m2 = testing::loadCorpus("sb2.ir");  // identical arms still meld
    CHECK(!runDarm(m2.functions[0], strict, lm).melds.empty());
  }
  SUBCASE("branch fusion only handles diamonds") {
    MeldConfig bf = cfg;
    bf.branchFusionOnly = true;
    Module m = testing::loadCorpus("sb2.ir");
    CHECK(runDarm(m.functions[0], bf, lm).melds.empty());
    Module m2 = testing::loadCorpus("sb1.ir");
    CHECK(!runDarm(m2.functions[0], bf, lm).melds.empty());
  }
}

TEST_CASE("first-iteration candidates leave the input untouched") {
  LatencyModel lm = LatencyModel::defaults();
  MeldConfig cfg;
  Module m = testing::loadCorpus("bitonic.ir");
  Function before = m.functions[0];
  auto cands = firstIterationCandidates(m.functions[0], cfg, lm);
  CHECK(m.functions[0] == before);
  REQUIRE(cands.size() == 1);
  CHECK(cands[0].regionEntry == "b");
  CHECK(cands[0].regionExit == "g");
  CHECK(cands[0].kind == "region-region");
  CHECK(cands[0].score >= 0.2);
}

TEST_CASE("melded corpus kernels print and reparse") {
  LatencyModel lm = LatencyModel::defaults();
  MeldConfig cfg;
  for (const auto &name : testing::positiveKernels()) {
    Module m = testing::loadCorpus(name);
    runDarm(m.functions[0], cfg, lm);
    Module back = parseModule(printModule(m));
    CHECK_MESSAGE(back == m, name);
  }
}
