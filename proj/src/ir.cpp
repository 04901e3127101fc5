#include "darm/ir.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace darm {

namespace {

struct OpcodeInfo {
  Opcode op;
  const char *name;
};

const OpcodeInfo kOpcodes[] = {
    {Opcode::Add, "add"},
    {Opcode::Sub, "sub"},
    {Opcode::Mul, "mul"},
    {Opcode::Div, "div"},
    {Opcode::Rem, "rem"},
    {Opcode::And, "and"},
    {Opcode::Or, "or"},
    {Opcode::Xor, "xor"},
    {Opcode::Shl, "shl"},
    {Opcode::Shr, "shr"},
    {Opcode::IcmpEq, "icmp.eq"},
    {Opcode::IcmpNe, "icmp.ne"},
    {Opcode::IcmpLt, "icmp.lt"},
    {Opcode::IcmpGt, "icmp.gt"},
    {Opcode::IcmpLe, "icmp.le"},
    {Opcode::IcmpGe, "icmp.ge"},
    {Opcode::Select, "select"},
    {Opcode::LoadShared, "load.shared"},
    {Opcode::StoreShared, "store.shared"},
    {Opcode::LoadGlobal, "load.global"},
    {Opcode::StoreGlobal, "store.global"},
    {Opcode::Tid, "tid"},
    {Opcode::Const, "const"},
    {Opcode::Phi, "phi"},
    {Opcode::Br, "br"},
    {Opcode::CondBr, "condbr"},
    {Opcode::Ret, "ret"},
    {Opcode::Barrier, "barrier"},
};

}  // namespace

const char *opcodeName(Opcode op) {
  for (const auto &e : kOpcodes)
    if (e.op == op) return e.name;
  return "<bad>";
}

std::optional<Opcode> opcodeFromName(const std::string &name) {
  for (const auto &e : kOpcodes)
    if (name == e.name) return e.op;
  return std::nullopt;
}

bool isTerminator(Opcode op) {
  return op == Opcode::Br || op == Opcode::CondBr || op == Opcode::Ret;
}

bool isCompare(Opcode op) {
  switch (op) {
    case Opcode::IcmpEq:
    case Opcode::IcmpNe:
    case Opcode::IcmpLt:
    case Opcode::IcmpGt:
    case Opcode::IcmpLe:
    case Opcode::IcmpGe:
      return true;
    default:
      return false;
  }
}

bool hasResult(Opcode op) {
  switch (op) {
    case Opcode::StoreShared:
    case Opcode::StoreGlobal:
    case Opcode::Br:
    case Opcode::CondBr:
    case Opcode::Ret:
    case Opcode::Barrier:
      return false;
    default:
      return true;
  }
}

Operand Operand::value(std::string name) {
  Operand o;
  o.kind = Kind::Value;
  o.text = std::move(name);
  return o;
}

Operand Operand::immediate(int32_t v) {
  Operand o;
  o.kind = Kind::Imm;
  o.imm = v;
  return o;
}

Operand Operand::undef() {
  Operand o;
  o.kind = Kind::Undef;
  return o;
}

Operand Operand::label(std::string name) {
  Operand o;
  o.kind = Kind::Label;
  o.text = std::move(name);
  return o;
}

Operand Operand::mem(std::string name) {
  Operand o;
  o.kind = Kind::Mem;
  o.text = std::move(name);
  return o;
}

bool Operand::operator==(const Operand &o) const {
  if (kind != o.kind) return false;
  if (kind == Kind::Imm) return imm == o.imm;
  if (kind == Kind::Undef) return true;
  return text == o.text;
}

bool Instruction::operator==(const Instruction &o) const {
  return op == o.op && result == o.result && operands == o.operands;
}

bool PhiNode::operator==(const PhiNode &o) const {
  return result == o.result && incomings == o.incomings;
}

std::vector<std::string> BasicBlock::successors() const {
  std::vector<std::string> out;
  for (const auto &op : terminator.operands)
    if (op.isLabel()) out.push_back(op.text);
  return out;
}

bool BasicBlock::operator==(const BasicBlock &o) const {
  return name == o.name && phis == o.phis && body == o.body &&
         terminator == o.terminator;
}

BasicBlock *Function::findBlock(const std::string &label) {
  for (auto &b : blocks)
    if (b.name == label) return &b;
  return nullptr;
}

const BasicBlock *Function::findBlock(const std::string &label) const {
  for (const auto &b : blocks)
    if (b.name == label) return &b;
  return nullptr;
}

int Function::blockIndex(const std::string &label) const {
  for (size_t i = 0; i < blocks.size(); ++i)
    if (blocks[i].name == label) return static_cast<int>(i);
  return -1;
}

std::map<std::string, std::vector<std::string>> Function::predecessors() const {
  std::map<std::string, std::vector<std::string>> preds;
  for (const auto &b : blocks) preds[b.name];
  for (const auto &b : blocks)
    for (const auto &s : b.successors()) preds[s].push_back(b.name);
  return preds;
}

std::unordered_set<std::string> Function::definedValues() const {
  std::unordered_set<std::string> defs(params.begin(), params.end());
  for (const auto &b : blocks) {
    for (const auto &p : b.phis) defs.insert(p.result);
    for (const auto &i : b.body)
      if (!i.result.empty()) defs.insert(i.result);
  }
  return defs;
}

std::string Function::freshValue(const std::string &hint) const {
  auto defs = definedValues();
  if (!defs.count(hint)) return hint;
  for (int i = 1;; ++i) {
    std::string cand = hint + "." + std::to_string(i);
    if (!defs.count(cand)) return cand;
  }
}

std::string Function::freshBlock(const std::string &hint) const {
  if (!findBlock(hint)) return hint;
  for (int i = 1;; ++i) {
    std::string cand = hint + "." + std::to_string(i);
    if (!findBlock(cand)) return cand;
  }
}

bool Function::operator==(const Function &o) const {
  return name == o.name && params == o.params && sharedDecls == o.sharedDecls &&
         blocks == o.blocks;
}

Function *Module::findFunction(const std::string &name) {
  for (auto &f : functions)
    if (f.name == name) return &f;
  return nullptr;
}

const Function *Module::findFunction(const std::string &name) const {
  for (const auto &f : functions)
    if (f.name == name) return &f;
  return nullptr;
}

const MemDecl *Module::findGlobal(const std::string &name) const {
  for (const auto &g : globals)
    if (g.name == name) return &g;
  return nullptr;
}

bool Module::operator==(const Module &o) const {
  return globals == o.globals && functions == o.functions;
}

LatencyModel LatencyModel::defaults() {
  // Preserves the ordering ALU < shared memory < global memory.
  LatencyModel lm;
  for (const auto &e : kOpcodes) lm.latencies_[e.op] = 1;
  lm.latencies_[Opcode::LoadShared] = 20;
  lm.latencies_[Opcode::StoreShared] = 20;
  lm.latencies_[Opcode::LoadGlobal] = 100;
  lm.latencies_[Opcode::StoreGlobal] = 100;
  return lm;
}

LatencyModel LatencyModel::fromFile(const std::string &path) {
  LatencyModel lm = defaults();
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open latency model: " + path);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": expected key=value");
    auto trim = [](std::string s) {
      auto b = s.find_first_not_of(" \t\r");
      auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    std::string key = trim(line.substr(0, eq));
    std::string val = trim(line.substr(eq + 1));
    auto op = opcodeFromName(key);
    if (!op)
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": unknown opcode '" + key + "'");
    int64_t cycles = std::stoll(val);
    if (cycles <= 0)
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": latency must be positive");
    lm.latencies_[*op] = cycles;
  }
  return lm;
}

int64_t LatencyModel::latency(Opcode op) const {
  auto it = latencies_.find(op);
  if (it == latencies_.end())
    throw std::runtime_error(std::string("no latency for opcode ") +
                             opcodeName(op));
  return it->second;
}

void LatencyModel::set(Opcode op, int64_t cycles) {
  if (cycles <= 0) throw std::runtime_error("latency must be positive");
  latencies_[op] = cycles;
}

int64_t blockLatency(const BasicBlock &b, const LatencyModel &lm) {
  int64_t sum = 0;
  for (const auto &p : b.phis) {
    (void)p;
    sum += lm.latency(Opcode::Phi);
  }
  for (const auto &i : b.body) sum += lm.latency(i.op);
  sum += lm.latency(b.terminator.op);
  return sum;
}

}  // namespace darm
