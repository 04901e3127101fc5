#include "darm/parser.hpp"

#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

namespace darm {

namespace {

struct Token {
  enum class Kind {
    Value,   // %name
    Label,   // ^name
    Int,     // decimal, optional leading '-'
    Undef,   // undef
    Ident,   // bare identifier (opcode, keyword, memory name)
    Punct,   // single char: ( ) { } [ ] : , =
    Newline,
    End,
  };
  Kind kind;
  std::string text;
  int64_t value = 0;
  int line = 0;
  int col = 0;
};

class Lexer {
 public:
  explicit Lexer(const std::string &src) : src_(src) {}

  Token next() {
    skipSpaceAndComments();
    Token t;
    t.line = line_;
    t.col = col_;
    if (pos_ >= src_.size()) {
      t.kind = Token::Kind::End;
      return t;
    }
    char c = src_[pos_];
    if (c == '\n') {
      advance();
      t.kind = Token::Kind::Newline;
      return t;
    }
    if (c == '%' || c == '^') {
      advance();
      std::string name = readName();
      if (name.empty()) throw ParseError(t.line, t.col, "expected name");
      t.kind = c == '%' ? Token::Kind::Value : Token::Kind::Label;
      t.text = name;
      return t;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) ||
        (c == '-' && pos_ + 1 < src_.size() &&
         std::isdigit(static_cast<unsigned char>(src_[pos_ + 1])))) {
      std::string num;
      if (c == '-') {
        num.push_back(c);
        advance();
      }
      while (pos_ < src_.size() &&
             std::isdigit(static_cast<unsigned char>(src_[pos_]))) {
        num.push_back(src_[pos_]);
        advance();
      }
      t.kind = Token::Kind::Int;
      t.text = num;
      try {
        t.value = std::stoll(num);
      } catch (...) {
        throw ParseError(t.line, t.col, "integer out of range");
      }
      return t;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_' || c == '.') {
      std::string name = readName();
      if (name == "undef") {
        t.kind = Token::Kind::Undef;
      } else {
        t.kind = Token::Kind::Ident;
        t.text = name;
      }
      return t;
    }
    if (std::string("(){}[]:,=").find(c) != std::string::npos) {
      advance();
      t.kind = Token::Kind::Punct;
      t.text = std::string(1, c);
      return t;
    }
    throw ParseError(t.line, t.col, std::string("unexpected character '") + c +
                                        "'");
  }

 private:
  void advance() {
    if (src_[pos_] == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    ++pos_;
  }

  void skipSpaceAndComments() {
    while (pos_ < src_.size()) {
      char c = src_[pos_];
      if (c == ' ' || c == '\t' || c == '\r') {
        advance();
      } else if (c == '#') {
        while (pos_ < src_.size() && src_[pos_] != '\n') advance();
      } else {
        break;
      }
    }
  }

  std::string readName() {
    std::string name;
    while (pos_ < src_.size()) {
      char c = src_[pos_];
      if (std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.') {
        name.push_back(c);
        advance();
      } else {
        break;
      }
    }
    return name;
  }

  const std::string &src_;
  size_t pos_ = 0;
  int line_ = 1;
  int col_ = 1;
};

class Parser {
 public:
  explicit Parser(const std::string &src) : lexer_(src) { bump(); }

  Module parseModule() {
    Module m;
    skipNewlines();
    while (cur_.kind != Token::Kind::End) {
      if (cur_.kind == Token::Kind::Ident && cur_.text == "global") {
        bump();
        MemDecl g = parseMemDecl();
        if (std::any_of(m.globals.begin(), m.globals.end(),
                        [&](const MemDecl &d) { return d.name == g.name; }))
          err("duplicate global '" + g.name + "'");
        m.globals.push_back(g);
      } else if (cur_.kind == Token::Kind::Ident && cur_.text == "fn") {
        bump();
        Function f = parseFunction();
        if (m.findFunction(f.name))
          err("duplicate function '" + f.name + "'");
        m.functions.push_back(std::move(f));
      } else {
        err("expected 'global' or 'fn'");
      }
      skipNewlines();
    }
    return m;
  }

 private:
  [[noreturn]] void err(const std::string &msg) {
    throw ParseError(cur_.line, cur_.col, msg);
  }

  void bump() { cur_ = lexer_.next(); }

  void skipNewlines() {
    while (cur_.kind == Token::Kind::Newline) bump();
  }

  void expectPunct(const std::string &p) {
    if (cur_.kind != Token::Kind::Punct || cur_.text != p)
      err("expected '" + p + "'");
    bump();
  }

  bool atPunct(const std::string &p) const {
    return cur_.kind == Token::Kind::Punct && cur_.text == p;
  }

  std::string expectIdent() {
    if (cur_.kind != Token::Kind::Ident) err("expected identifier");
    std::string s = cur_.text;
    bump();
    return s;
  }

  MemDecl parseMemDecl() {
    MemDecl d;
    d.name = expectIdent();
    expectPunct("[");
    if (cur_.kind != Token::Kind::Int) err("expected array size");
    d.size = cur_.value;
    if (d.size <= 0) err("array size must be positive");
    bump();
    expectPunct("]");
    return d;
  }

  Function parseFunction() {
    Function f;
    f.name = expectIdent();
    expectPunct("(");
    std::set<std::string> seen;
    while (!atPunct(")")) {
      if (cur_.kind != Token::Kind::Value) err("expected parameter");
      if (!seen.insert(cur_.text).second)
        err("duplicate parameter '%" + cur_.text + "'");
      f.params.push_back(cur_.text);
      bump();
      if (atPunct(","))
        bump();
      else if (!atPunct(")"))
        err("expected ',' or ')'");
    }
    bump();
    while (cur_.kind == Token::Kind::Ident && cur_.text == "shared") {
      bump();
      MemDecl d = parseMemDecl();
      if (std::any_of(f.sharedDecls.begin(), f.sharedDecls.end(),
                      [&](const MemDecl &x) { return x.name == d.name; }))
        err("duplicate shared array '" + d.name + "'");
      f.sharedDecls.push_back(d);
    }
    expectPunct("{");
    skipNewlines();
    std::set<std::string> defs(f.params.begin(), f.params.end());
    while (!atPunct("}")) {
      f.blocks.push_back(parseBlock(f, defs));
      skipNewlines();
    }
    bump();
    if (f.blocks.empty()) err("function has no blocks");
    return f;
  }

  Operand parseValueOrImm() {
    if (cur_.kind == Token::Kind::Value) {
      Operand o = Operand::value(cur_.text);
      bump();
      return o;
    }
    if (cur_.kind == Token::Kind::Int) {
      if (cur_.value < INT32_MIN || cur_.value > INT32_MAX)
        err("immediate out of 32-bit range");
      Operand o = Operand::immediate(static_cast<int32_t>(cur_.value));
      bump();
      return o;
    }
    if (cur_.kind == Token::Kind::Undef) {
      bump();
      return Operand::undef();
    }
    err("expected value or immediate");
  }

  std::string parseLabelRef() {
    if (cur_.kind != Token::Kind::Label) err("expected ^label");
    std::string s = cur_.text;
    bump();
    return s;
  }

  // Memory name before the index operand; optional for shared accesses when
  // the function declares exactly one shared array.
  Operand parseMemName(const Function &f, bool shared) {
    if (cur_.kind == Token::Kind::Ident) {
      Operand o = Operand::mem(cur_.text);
      bump();
      return o;
    }
    if (shared) {
      if (f.sharedDecls.size() == 1) return Operand::mem(f.sharedDecls[0].name);
      err("shared access needs an array name");
    }
    err("expected memory name");
  }

  BasicBlock parseBlock(const Function &f, std::set<std::string> &defs) {
    BasicBlock b;
    if (cur_.kind != Token::Kind::Label) err("expected block label");
    b.name = cur_.text;
    if (f.findBlock(b.name)) err("duplicate block '^" + b.name + "'");
    bump();
    expectPunct(":");
    skipNewlines();
    bool sawNonPhi = false;
    bool terminated = false;
    while (!terminated) {
      if (atPunct("}")) err("block '^" + b.name + "' has no terminator");
      Token start = cur_;
      std::string result;
      if (cur_.kind == Token::Kind::Value) {
        result = cur_.text;
        bump();
        expectPunct("=");
      }
      if (cur_.kind != Token::Kind::Ident) err("expected opcode");
      auto op = opcodeFromName(cur_.text);
      if (!op) {
        throw ParseError(cur_.line, cur_.col,
                         "unknown opcode '" + cur_.text + "'");
      }
      bump();
      if (hasResult(*op)) {
        if (result.empty())
          throw ParseError(start.line, start.col,
                           std::string(opcodeName(*op)) + " needs a result");
        if (!defs.insert(result).second)
          throw ParseError(start.line, start.col,
                           "duplicate definition '%" + result + "'");
      } else if (!result.empty()) {
        throw ParseError(start.line, start.col,
                         std::string(opcodeName(*op)) + " has no result");
      }
      if (*op == Opcode::Phi) {
        if (sawNonPhi)
          throw ParseError(start.line, start.col, "phi after non-phi");
        PhiNode phi;
        phi.result = result;
        while (true) {
          Operand v = parseValueOrImm();
          expectPunct(":");
          phi.incomings.emplace_back(v, parseLabelRef());
          if (atPunct(","))
            bump();
          else
            break;
        }
        if (phi.incomings.size() < 2)
          throw ParseError(start.line, start.col,
                           "phi needs at least two incomings");
        b.phis.push_back(std::move(phi));
      } else {
        sawNonPhi = true;
        Instruction inst;
        inst.op = *op;
        inst.result = result;
        switch (*op) {
          case Opcode::Add:
          case Opcode::Sub:
          case Opcode::Mul:
          case Opcode::Div:
          case Opcode::Rem:
          case Opcode::And:
          case Opcode::Or:
          case Opcode::Xor:
          case Opcode::Shl:
          case Opcode::Shr:
          case Opcode::IcmpEq:
          case Opcode::IcmpNe:
          case Opcode::IcmpLt:
          case Opcode::IcmpGt:
          case Opcode::IcmpLe:
          case Opcode::IcmpGe:
            inst.operands.push_back(parseValueOrImm());
            inst.operands.push_back(parseValueOrImm());
            break;
          case Opcode::Select:
            inst.operands.push_back(parseValueOrImm());
            inst.operands.push_back(parseValueOrImm());
            inst.operands.push_back(parseValueOrImm());
            break;
          case Opcode::LoadShared:
            inst.operands.push_back(parseMemName(f, true));
            inst.operands.push_back(parseValueOrImm());
            break;
          case Opcode::StoreShared:
            inst.operands.push_back(parseMemName(f, true));
            inst.operands.push_back(parseValueOrImm());
            inst.operands.push_back(parseValueOrImm());
            break;
          case Opcode::LoadGlobal:
            inst.operands.push_back(parseMemName(f, false));
            inst.operands.push_back(parseValueOrImm());
            break;
          case Opcode::StoreGlobal:
            inst.operands.push_back(parseMemName(f, false));
            inst.operands.push_back(parseValueOrImm());
            inst.operands.push_back(parseValueOrImm());
            break;
          case Opcode::Tid:
          case Opcode::Barrier:
            break;
          case Opcode::Const:
            inst.operands.push_back(parseValueOrImm());
            if (inst.operands[0].isValue())
              throw ParseError(start.line, start.col,
                               "const takes an immediate");
            break;
          case Opcode::Br:
            inst.operands.push_back(Operand::label(parseLabelRef()));
            break;
          case Opcode::CondBr:
            inst.operands.push_back(parseValueOrImm());
            inst.operands.push_back(Operand::label(parseLabelRef()));
            inst.operands.push_back(Operand::label(parseLabelRef()));
            break;
          case Opcode::Ret:
            if (cur_.kind == Token::Kind::Value ||
                cur_.kind == Token::Kind::Int ||
                cur_.kind == Token::Kind::Undef)
              inst.operands.push_back(parseValueOrImm());
            break;
          case Opcode::Phi:
            break;  // handled above
        }
        if (isTerminator(*op)) {
          b.terminator = std::move(inst);
          terminated = true;
        } else {
          b.body.push_back(std::move(inst));
        }
      }
      if (cur_.kind != Token::Kind::Newline && cur_.kind != Token::Kind::End &&
          !atPunct("}"))
        err("trailing tokens after instruction");
      skipNewlines();
    }
    return b;
  }

  Lexer lexer_;
  Token cur_;
};

std::string operandText(const Operand &o) {
  switch (o.kind) {
    case Operand::Kind::Value:
      return "%" + o.text;
    case Operand::Kind::Imm:
      return std::to_string(o.imm);
    case Operand::Kind::Undef:
      return "undef";
    case Operand::Kind::Label:
      return "^" + o.text;
    case Operand::Kind::Mem:
      return o.text;
  }
  return "?";
}

void printInstruction(std::ostream &os, const Instruction &i) {
  os << "  ";
  if (!i.result.empty()) os << "%" << i.result << " = ";
  os << opcodeName(i.op);
  for (const auto &o : i.operands) os << " " << operandText(o);
  os << "\n";
}

}  // namespace

Module parseModule(const std::string &text) {
  Parser p(text);
  return p.parseModule();
}

Module parseModuleFile(const std::string &path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parseModule(ss.str());
  } catch (const ParseError &e) {
    throw std::runtime_error(path + ":" + e.what());
  }
}

std::string printFunction(const Function &f) {
  std::ostringstream os;
  os << "fn " << f.name << "(";
  for (size_t i = 0; i < f.params.size(); ++i) {
    if (i) os << ", ";
    os << "%" << f.params[i];
  }
  os << ")";
  for (const auto &d : f.sharedDecls)
    os << " shared " << d.name << "[" << d.size << "]";
  os << " {\n";
  for (const auto &b : f.blocks) {
    os << "^" << b.name << ":\n";
    for (const auto &p : b.phis) {
      os << "  %" << p.result << " = phi ";
      for (size_t i = 0; i < p.incomings.size(); ++i) {
        if (i) os << ", ";
        os << operandText(p.incomings[i].first) << ":^"
           << p.incomings[i].second;
      }
      os << "\n";
    }
    for (const auto &i : b.body) printInstruction(os, i);
    printInstruction(os, b.terminator);
  }
  os << "}\n";
  return os.str();
}

std::string printModule(const Module &m) {
  std::ostringstream os;
  os << "# darm mini-IR\n";
  for (const auto &g : m.globals)
    os << "global " << g.name << "[" << g.size << "]\n";
  for (const auto &f : m.functions) {
    os << "\n" << printFunction(f);
  }
  return os.str();
}

}  // namespace darm
