#ifndef DARM_IR_HPP
#define DARM_IR_HPP

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace darm {

// Opcodes of the mini-IR. Comparison predicates are distinct opcodes so that
// instruction compatibility and frequency profiles distinguish them.
enum class Opcode {
  Add,
  Sub,
  Mul,
  Div,
  Rem,
  And,
  Or,
  Xor,
  Shl,
  Shr,
  IcmpEq,
  IcmpNe,
  IcmpLt,
  IcmpGt,
  IcmpLe,
  IcmpGe,
  Select,
  LoadShared,
  StoreShared,
  LoadGlobal,
  StoreGlobal,
  Tid,
  Const,
  Phi,
  Br,
  CondBr,
  Ret,
  Barrier,  // reserved warp-level intrinsic; never melded
};

const char *opcodeName(Opcode op);
std::optional<Opcode> opcodeFromName(const std::string &name);
bool isTerminator(Opcode op);
bool isCompare(Opcode op);
bool hasResult(Opcode op);

struct Operand {
  enum class Kind { Value, Imm, Undef, Label, Mem };
  Kind kind = Kind::Imm;
  std::string text;   // value name, label name or memory name
  int32_t imm = 0;

  static Operand value(std::string name);
  static Operand immediate(int32_t v);
  static Operand undef();
  static Operand label(std::string name);
  static Operand mem(std::string name);

  bool isValue() const { return kind == Kind::Value; }
  bool isLabel() const { return kind == Kind::Label; }
  bool isMem() const { return kind == Kind::Mem; }
  bool operator==(const Operand &o) const;
  bool operator!=(const Operand &o) const { return !(*this == o); }
};

struct Instruction {
  Opcode op = Opcode::Ret;
  std::string result;  // empty when the opcode produces no value
  std::vector<Operand> operands;

  bool operator==(const Instruction &o) const;
};

struct PhiNode {
  std::string result;
  // One incoming (value, predecessor label) per predecessor.
  std::vector<std::pair<Operand, std::string>> incomings;

  bool operator==(const PhiNode &o) const;
};

struct BasicBlock {
  std::string name;
  std::vector<PhiNode> phis;
  std::vector<Instruction> body;
  Instruction terminator;

  std::vector<std::string> successors() const;
  bool operator==(const BasicBlock &o) const;
};

struct MemDecl {
  std::string name;
  int64_t size = 0;
  bool operator==(const MemDecl &o) const {
    return name == o.name && size == o.size;
  }
};

struct Function {
  std::string name;
  std::vector<std::string> params;
  std::vector<MemDecl> sharedDecls;
  std::vector<BasicBlock> blocks;  // blocks[0] is the entry

  BasicBlock *findBlock(const std::string &label);
  const BasicBlock *findBlock(const std::string &label) const;
  int blockIndex(const std::string &label) const;  // -1 when absent
  const BasicBlock &entry() const { return blocks.front(); }

  std::map<std::string, std::vector<std::string>> predecessors() const;

  // Fresh value/block names that do not collide with anything in the function.
  std::string freshValue(const std::string &hint) const;
  std::string freshBlock(const std::string &hint) const;

  std::unordered_set<std::string> definedValues() const;

  bool operator==(const Function &o) const;
};

struct Module {
  std::vector<MemDecl> globals;
  std::vector<Function> functions;

  Function *findFunction(const std::string &name);
  const Function *findFunction(const std::string &name) const;
  const MemDecl *findGlobal(const std::string &name) const;

  bool operator==(const Module &o) const;
};

// Static per-opcode latency in cycles.
class LatencyModel {
 public:
  static LatencyModel defaults();
  // key=value overrides, one per line, keys are opcode names.
  static LatencyModel fromFile(const std::string &path);

  int64_t latency(Opcode op) const;
  void set(Opcode op, int64_t cycles);

 private:
  std::map<Opcode, int64_t> latencies_;
};

int64_t blockLatency(const BasicBlock &b, const LatencyModel &lm);

}  // namespace darm

#endif
