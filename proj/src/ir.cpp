#include "listerm/ir.hpp"

#include <algorithm>
#include <cassert>
#include <cctype>
#include <set>
#include <sstream>

namespace listerm::ir {

Type Type::int_ty(int bits) {
  Type t;
  t.kind_ = Kind::Int;
  t.bits_ = bits;
  return t;
}

Type Type::ptr_to(const Type& pointee) {
  Type t;
  t.kind_ = Kind::Ptr;
  t.pointee_ = std::make_shared<Type>(pointee);
  return t;
}

Type Type::struct_ty(std::string name) {
  Type t;
  t.kind_ = Kind::Struct;
  t.name_ = std::move(name);
  return t;
}

Type Type::void_ty() { return Type{}; }

std::string Type::str() const {
  switch (kind_) {
    case Kind::Int: return "i" + std::to_string(bits_);
    case Kind::Ptr: return pointee_->str() + "*";
    case Kind::Struct: return name_;
    case Kind::Void: return "void";
  }
  return "?";
}

bool Type::operator==(const Type& o) const {
  if (kind_ != o.kind_) return false;
  switch (kind_) {
    case Kind::Int: return bits_ == o.bits_;
    case Kind::Ptr: return *pointee_ == *o.pointee_;
    case Kind::Struct: return name_ == o.name_;
    case Kind::Void: return true;
  }
  return false;
}

Operand Operand::make_reg(std::string name, Type ty) {
  Operand o;
  o.kind = Kind::Reg;
  o.reg = std::move(name);
  o.ty = std::move(ty);
  return o;
}

Operand Operand::make_int(std::int64_t v, Type ty) {
  Operand o;
  o.kind = Kind::IntLit;
  o.value = v;
  o.ty = std::move(ty);
  return o;
}

Operand Operand::make_null(Type ty) {
  Operand o;
  o.kind = Kind::Null;
  o.ty = std::move(ty);
  return o;
}

std::string Operand::str() const {
  switch (kind) {
    case Kind::Reg: return reg;
    case Kind::IntLit: return std::to_string(value);
    case Kind::Null: return "null";
  }
  return "?";
}

namespace {

const char* pred_name(IcmpPred p) {
  switch (p) {
    case IcmpPred::Eq: return "eq";
    case IcmpPred::Ne: return "ne";
    case IcmpPred::Ult: return "ult";
    case IcmpPred::Ule: return "ule";
    case IcmpPred::Ugt: return "ugt";
    case IcmpPred::Uge: return "uge";
    case IcmpPred::Slt: return "slt";
    case IcmpPred::Sle: return "sle";
    case IcmpPred::Sgt: return "sgt";
    case IcmpPred::Sge: return "sge";
  }
  return "?";
}

const char* intrinsic_name(Intrinsic i) {
  switch (i) {
    case Intrinsic::Malloc: return "malloc";
    case Intrinsic::NondetI32: return "nondet_i32";
    case Intrinsic::NondetU32: return "nondet_u32";
    case Intrinsic::NondetI64: return "nondet_i64";
  }
  return "?";
}

}  // namespace

std::string Instruction::str() const {
  std::ostringstream os;
  if (!result.empty()) os << result << " = ";
  switch (op) {
    case Opcode::Load:
      os << "load " << ty.str() << ", " << ty.str() << "* " << args[0].str();
      break;
    case Opcode::Store:
      os << "store " << ty.str() << " " << args[0].str() << ", " << ty.str() << "* "
         << args[1].str();
      break;
    case Opcode::Icmp:
      os << "icmp " << pred_name(pred) << " " << ty.str() << " " << args[0].str()
         << ", " << args[1].str();
      break;
    case Opcode::Br:
      if (args.empty())
        os << "br label " << target;
      else
        os << "br i1 " << args[0].str() << ", label " << target << ", label "
           << target2;
      break;
    case Opcode::Add:
    case Opcode::Sub:
    case Opcode::Mul:
      os << (op == Opcode::Add ? "add" : op == Opcode::Sub ? "sub" : "mul") << " "
         << ty.str() << " " << args[0].str() << ", " << args[1].str();
      break;
    case Opcode::Alloca:
      os << "alloca " << ty.str();
      break;
    case Opcode::Bitcast:
      os << "bitcast " << ty.str() << " " << args[0].str() << " to " << ty2.str();
      break;
    case Opcode::Zext:
    case Opcode::Sext:
      os << (op == Opcode::Zext ? "zext" : "sext") << " " << ty.str() << " "
         << args[0].str() << " to " << ty2.str();
      break;
    case Opcode::Gep:
      if (gep_byte_form)
        os << "getelementptr i8, i8* " << args[0].str() << ", i64 " << args[1].str();
      else
        os << "getelementptr " << ty.str() << ", " << ty.str() << "* "
           << args[0].str() << ", i32 0, i32 " << field_index;
      break;
    case Opcode::Call:
      os << "call " << ty.str() << " @" << intrinsic_name(callee) << "(";
      for (std::size_t i = 0; i < args.size(); ++i) {
        if (i) os << ", ";
        os << args[i].ty.str() << " " << args[i].str();
      }
      os << ")";
      break;
    case Opcode::Ret:
      if (args.empty())
        os << "ret void";
      else
        os << "ret " << ty.str() << " " << args[0].str();
      break;
  }
  return os.str();
}

const Block& Program::block(const std::string& label) const {
  auto it = block_index_.find(label);
  assert(it != block_index_.end());
  return blocks_[it->second];
}

const std::vector<Type>& Program::struct_fields(const std::string& name) const {
  auto it = structs_.find(name);
  assert(it != structs_.end());
  return it->second;
}

const StructLayout& Program::layout(const std::string& struct_name) const {
  auto it = layouts_.find(struct_name);
  assert(it != layouts_.end());
  return it->second;
}

std::string Program::str() const {
  std::ostringstream os;
  for (const auto& [name, fields] : structs_) {
    os << name << " = type { ";
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) os << ", ";
      os << fields[i].str();
    }
    os << " }\n";
  }
  os << "\ndefine " << ret_ty_.str() << " @" << fn_name_ << "() {\n";
  for (const auto& b : blocks_) {
    os << b.label << ":\n";
    for (std::size_t i = 0; i < b.insts.size(); ++i)
      os << "  " << i << ": " << b.insts[i].str() << "\n";
  }
  os << "}\n";
  return os.str();
}

std::int64_t size_of(const Program& p, const Type& ty) {
  switch (ty.kind()) {
    case Type::Kind::Int:
      return ty.bits() <= 8 ? 1 : ty.bits() / 8;
    case Type::Kind::Ptr:
      return 8;
    case Type::Kind::Struct:
      return p.layout(ty.struct_name()).size;
    case Type::Kind::Void:
      throw std::invalid_argument("sizeof void");
  }
  return 0;
}

std::int64_t align_of(const Program& p, const Type& ty) {
  switch (ty.kind()) {
    case Type::Kind::Int:
    case Type::Kind::Ptr:
      return size_of(p, ty);
    case Type::Kind::Struct:
      return p.layout(ty.struct_name()).align;
    case Type::Kind::Void:
      throw std::invalid_argument("alignof void");
  }
  return 1;
}

std::int64_t field_offset(const Program& p, const std::string& struct_name,
                          std::size_t k) {
  const StructLayout& l = p.layout(struct_name);
  if (k >= l.offsets.size()) throw std::out_of_range("field index out of range");
  return l.offsets[k];
}

namespace {

struct Tok {
  enum class Kind { Ident, Number, Punct, End };
  Kind kind = Kind::End;
  std::string text;
  std::int64_t num = 0;
  int col = 0;
};

class LineLexer {
 public:
  LineLexer(const std::string& line, int lineno) : line_(line), lineno_(lineno) {
    tokenize();
  }

  const Tok& peek(std::size_t ahead = 0) const {
    static const Tok end{};
    std::size_t i = pos_ + ahead;
    return i < toks_.size() ? toks_[i] : end;
  }
  Tok next() {
    Tok t = peek();
    if (pos_ < toks_.size()) ++pos_;
    return t;
  }
  bool at_end() const { return pos_ >= toks_.size(); }

  [[noreturn]] void fail(const std::string& msg) const {
    int col = pos_ < toks_.size() ? toks_[pos_].col : static_cast<int>(line_.size()) + 1;
    throw ParseError(msg, lineno_, col);
  }

  void expect_punct(char c) {
    const Tok& t = peek();
    if (t.kind != Tok::Kind::Punct || t.text[0] != c)
      fail(std::string("expected '") + c + "'");
    next();
  }
  bool eat_punct(char c) {
    const Tok& t = peek();
    if (t.kind == Tok::Kind::Punct && t.text[0] == c) {
      next();
      return true;
    }
    return false;
  }
  std::string expect_ident(const char* what) {
    const Tok& t = peek();
    if (t.kind != Tok::Kind::Ident) fail(std::string("expected ") + what);
    return next().text;
  }
  void expect_keyword(const char* kw) {
    const Tok& t = peek();
    if (t.kind != Tok::Kind::Ident || t.text != kw)
      fail(std::string("expected '") + kw + "'");
    next();
  }
  int lineno() const { return lineno_; }

 private:
  void tokenize() {
    std::size_t i = 0;
    auto comment = line_.find(';');
    std::string line = comment == std::string::npos ? line_ : line_.substr(0, comment);
    while (i < line.size()) {
      char c = line[i];
      if (std::isspace(static_cast<unsigned char>(c))) {
        ++i;
        continue;
      }
      int col = static_cast<int>(i) + 1;
      if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
        std::size_t j = i;
        while (j < line.size() && (std::isalnum(static_cast<unsigned char>(line[j])) ||
                                   line[j] == '_' || line[j] == '.'))
          ++j;
        toks_.push_back({Tok::Kind::Ident, line.substr(i, j - i), 0, col});
        i = j;
      } else if (std::isdigit(static_cast<unsigned char>(c)) ||
                 (c == '-' && i + 1 < line.size() &&
                  std::isdigit(static_cast<unsigned char>(line[i + 1])))) {
        std::size_t j = i + 1;
        while (j < line.size() && std::isdigit(static_cast<unsigned char>(line[j]))) ++j;
        Tok t{Tok::Kind::Number, line.substr(i, j - i), 0, col};
        try {
          t.num = std::stoll(t.text);
        } catch (const std::out_of_range&) {
          throw ParseError("integer literal out of range", lineno_, col);
        }
        toks_.push_back(t);
        i = j;
      } else if (std::string("={}(),:*@").find(c) != std::string::npos) {
        toks_.push_back({Tok::Kind::Punct, std::string(1, c), 0, col});
        ++i;
      } else {
        throw ParseError(std::string("unexpected character '") + c + "'", lineno_, col);
      }
    }
  }

  std::string line_;
  int lineno_;
  std::size_t pos_ = 0;
  std::vector<Tok> toks_;
};

}  // namespace

class Parser {
 public:
  explicit Parser(const std::string& text) {
    std::istringstream is(text);
    std::string line;
    int n = 0;
    while (std::getline(is, line)) lines_.push_back({++n, line});
  }

  Program run() {
    Program p;
    std::size_t i = 0;
    // type declarations
    while (i < lines_.size()) {
      LineLexer lx(lines_[i].second, lines_[i].first);
      if (lx.at_end()) {
        ++i;
        continue;
      }
      if (lx.peek().kind == Tok::Kind::Ident && lx.peek().text == "define") break;
      parse_typedecl(p, lx);
      ++i;
    }
    if (i >= lines_.size())
      throw ParseError("expected 'define' after type declarations",
                       static_cast<int>(lines_.size()), 1);
    {
      LineLexer lx(lines_[i].second, lines_[i].first);
      parse_define_header(p, lx);
      ++i;
    }
    // blocks
    Block* cur = nullptr;
    bool closed = false;
    for (; i < lines_.size(); ++i) {
      LineLexer lx(lines_[i].second, lines_[i].first);
      if (lx.at_end()) continue;
      if (closed) lx.fail("content after closing '}'");
      if (lx.peek().kind == Tok::Kind::Punct && lx.peek().text == "}") {
        lx.next();
        if (!lx.at_end()) lx.fail("trailing tokens after '}'");
        closed = true;
        continue;
      }
      // label line: IDENT ':' end
      if (lx.peek().kind == Tok::Kind::Ident &&
          lx.peek(1).kind == Tok::Kind::Punct && lx.peek(1).text == ":" &&
          lx.peek(2).kind == Tok::Kind::End) {
        std::string label = lx.next().text;
        lx.next();
        if (p.block_index_.count(label))
          throw ParseError("duplicate label '" + label + "'", lines_[i].first, 1);
        p.block_index_[label] = static_cast<int>(p.blocks_.size());
        p.blocks_.push_back(Block{label, {}});
        cur = &p.blocks_.back();
        continue;
      }
      if (!cur) lx.fail("instruction before first block label");
      cur->insts.push_back(parse_instruction(p, lx, cur->insts.size()));
    }
    if (!closed)
      throw ParseError("missing closing '}'", static_cast<int>(lines_.size()), 1);
    validate(p);
    return p;
  }

 private:
  std::vector<std::pair<int, std::string>> lines_;

  void parse_typedecl(Program& p, LineLexer& lx) {
    std::string name = lx.expect_ident("type name");
    if (is_builtin_type_name(name)) lx.fail("cannot redeclare builtin type");
    lx.expect_punct('=');
    lx.expect_keyword("type");
    lx.expect_punct('{');
    std::vector<Type> fields;
    if (!lx.eat_punct('}')) {
      for (;;) {
        fields.push_back(parse_type(lx));
        if (lx.eat_punct('}')) break;
        lx.expect_punct(',');
      }
    }
    if (fields.empty()) lx.fail("empty struct types are rejected");
    if (!lx.at_end()) lx.fail("trailing tokens after type declaration");
    if (p.structs_.count(name)) lx.fail("duplicate type '" + name + "'");
    p.structs_[name] = std::move(fields);
  }

  void parse_define_header(Program& p, LineLexer& lx) {
    lx.expect_keyword("define");
    p.ret_ty_ = parse_type(lx);
    lx.expect_punct('@');
    p.fn_name_ = lx.expect_ident("function name");
    lx.expect_punct('(');
    lx.expect_punct(')');
    lx.expect_punct('{');
    if (!lx.at_end()) lx.fail("trailing tokens after define header");
  }

  static bool is_builtin_type_name(const std::string& s) {
    return s == "i1" || s == "i8" || s == "i32" || s == "i64" || s == "void";
  }

  Type parse_type(LineLexer& lx) {
    std::string base = lx.expect_ident("type");
    Type t;
    if (base == "i1")
      t = Type::int_ty(1);
    else if (base == "i8")
      t = Type::int_ty(8);
    else if (base == "i32")
      t = Type::int_ty(32);
    else if (base == "i64")
      t = Type::int_ty(64);
    else if (base == "void")
      t = Type::void_ty();
    else
      t = Type::struct_ty(base);
    while (lx.eat_punct('*')) t = Type::ptr_to(t);
    return t;
  }

  Operand parse_operand(LineLexer& lx, const Type& ty) {
    const Tok& t = lx.peek();
    if (t.kind == Tok::Kind::Number) return Operand::make_int(lx.next().num, ty);
    if (t.kind == Tok::Kind::Ident && t.text == "null") {
      lx.next();
      if (!ty.is_ptr()) lx.fail("'null' requires a pointer type");
      return Operand::make_null(ty);
    }
    if (t.kind == Tok::Kind::Ident) return Operand::make_reg(lx.next().text, ty);
    lx.fail("expected operand");
  }

  Instruction parse_instruction(Program& p, LineLexer& lx, std::size_t index) {
    // optional "N:" index prefix, validated against the actual offset
    if (lx.peek().kind == Tok::Kind::Number && lx.peek(1).kind == Tok::Kind::Punct &&
        lx.peek(1).text == ":") {
      std::int64_t n = lx.next().num;
      lx.next();
      if (n != static_cast<std::int64_t>(index))
        lx.fail("instruction index " + std::to_string(n) + " does not match offset " +
                std::to_string(index));
    }
    Instruction inst;
    inst.line = lx.lineno();
    // optional "res ="
    if (lx.peek().kind == Tok::Kind::Ident && lx.peek(1).kind == Tok::Kind::Punct &&
        lx.peek(1).text == "=") {
      inst.result = lx.next().text;
      lx.next();
    }
    std::string op = lx.expect_ident("opcode");
    if (op == "load") {
      inst.op = Opcode::Load;
      require_result(lx, inst);
      inst.ty = parse_type(lx);
      lx.expect_punct(',');
      Type pt = parse_type(lx);
      if (!pt.is_ptr() || pt.pointee() != inst.ty)
        lx.fail("load pointer type must be value type followed by '*'");
      inst.args.push_back(parse_operand(lx, pt));
    } else if (op == "store") {
      inst.op = Opcode::Store;
      forbid_result(lx, inst);
      inst.ty = parse_type(lx);
      inst.args.push_back(parse_operand(lx, inst.ty));
      lx.expect_punct(',');
      Type pt = parse_type(lx);
      if (!pt.is_ptr() || pt.pointee() != inst.ty)
        lx.fail("store pointer type must be value type followed by '*'");
      inst.args.push_back(parse_operand(lx, pt));
    } else if (op == "icmp") {
      inst.op = Opcode::Icmp;
      require_result(lx, inst);
      std::string pr = lx.expect_ident("icmp predicate");
      static const std::map<std::string, IcmpPred> preds = {
          {"eq", IcmpPred::Eq},   {"ne", IcmpPred::Ne},   {"ult", IcmpPred::Ult},
          {"ule", IcmpPred::Ule}, {"ugt", IcmpPred::Ugt}, {"uge", IcmpPred::Uge},
          {"slt", IcmpPred::Slt}, {"sle", IcmpPred::Sle}, {"sgt", IcmpPred::Sgt},
          {"sge", IcmpPred::Sge}};
      auto it = preds.find(pr);
      if (it == preds.end()) lx.fail("unknown icmp predicate '" + pr + "'");
      inst.pred = it->second;
      inst.ty = parse_type(lx);
      inst.args.push_back(parse_operand(lx, inst.ty));
      lx.expect_punct(',');
      inst.args.push_back(parse_operand(lx, inst.ty));
    } else if (op == "br") {
      inst.op = Opcode::Br;
      forbid_result(lx, inst);
      if (lx.peek().kind == Tok::Kind::Ident && lx.peek().text == "label") {
        lx.next();
        inst.target = lx.expect_ident("label");
      } else {
        Type ty = parse_type(lx);
        if (!(ty.is_int() && ty.bits() == 1)) lx.fail("conditional br requires i1");
        inst.args.push_back(parse_operand(lx, ty));
        lx.expect_punct(',');
        lx.expect_keyword("label");
        inst.target = lx.expect_ident("label");
        lx.expect_punct(',');
        lx.expect_keyword("label");
        inst.target2 = lx.expect_ident("label");
      }
    } else if (op == "add" || op == "sub" || op == "mul") {
      inst.op = op == "add" ? Opcode::Add : op == "sub" ? Opcode::Sub : Opcode::Mul;
      require_result(lx, inst);
      inst.ty = parse_type(lx);
      if (!inst.ty.is_int()) lx.fail("arithmetic requires an integer type");
      inst.args.push_back(parse_operand(lx, inst.ty));
      lx.expect_punct(',');
      inst.args.push_back(parse_operand(lx, inst.ty));
    } else if (op == "alloca") {
      inst.op = Opcode::Alloca;
      require_result(lx, inst);
      inst.ty = parse_type(lx);
      if (inst.ty.is_void()) lx.fail("cannot alloca void");
    } else if (op == "bitcast" || op == "zext" || op == "sext") {
      inst.op = op == "bitcast" ? Opcode::Bitcast
                                : (op == "zext" ? Opcode::Zext : Opcode::Sext);
      require_result(lx, inst);
      inst.ty = parse_type(lx);
      inst.args.push_back(parse_operand(lx, inst.ty));
      lx.expect_keyword("to");
      inst.ty2 = parse_type(lx);
    } else if (op == "getelementptr") {
      inst.op = Opcode::Gep;
      require_result(lx, inst);
      Type base = parse_type(lx);
      lx.expect_punct(',');
      Type pt = parse_type(lx);
      if (!pt.is_ptr() || pt.pointee() != base)
        lx.fail("getelementptr pointer type must be base type followed by '*'");
      inst.args.push_back(parse_operand(lx, pt));
      lx.expect_punct(',');
      if (base.is_int() && base.bits() == 8) {
        inst.gep_byte_form = true;
        Type idx_ty = parse_type(lx);
        if (!idx_ty.is_int()) lx.fail("byte getelementptr index must be an integer");
        inst.args.push_back(parse_operand(lx, idx_ty));
      } else if (base.is_struct()) {
        inst.ty = base;
        Type i0 = parse_type(lx);
        if (!i0.is_int()) lx.fail("struct getelementptr indices must be integers");
        const Tok& z = lx.peek();
        if (z.kind != Tok::Kind::Number || z.num != 0)
          lx.fail("struct getelementptr supports only leading index 0");
        lx.next();
        lx.expect_punct(',');
        Type i1 = parse_type(lx);
        if (!i1.is_int()) lx.fail("struct getelementptr indices must be integers");
        const Tok& k = lx.peek();
        if (k.kind != Tok::Kind::Number || k.num < 0)
          lx.fail("expected field index literal");
        inst.field_index = static_cast<std::size_t>(lx.next().num);
      } else {
        lx.fail("getelementptr base must be a struct type or i8");
      }
    } else if (op == "call") {
      inst.op = Opcode::Call;
      inst.ty = parse_type(lx);
      lx.expect_punct('@');
      std::string callee = lx.expect_ident("intrinsic name");
      lx.expect_punct('(');
      if (callee == "malloc") {
        inst.callee = Intrinsic::Malloc;
        require_result(lx, inst);
        Type arg_ty = parse_type(lx);
        if (!(arg_ty.is_int() && arg_ty.bits() == 64))
          lx.fail("malloc takes an i64 size");
        inst.args.push_back(parse_operand(lx, arg_ty));
      } else if (callee == "nondet_i32") {
        inst.callee = Intrinsic::NondetI32;
        require_result(lx, inst);
      } else if (callee == "nondet_u32" || callee == "nondet_uint") {
        inst.callee = Intrinsic::NondetU32;
        require_result(lx, inst);
      } else if (callee == "nondet_i64") {
        inst.callee = Intrinsic::NondetI64;
        require_result(lx, inst);
      } else {
        lx.fail("unknown callee '@" + callee + "' (direct calls support only the "
                "malloc/nondet intrinsics)");
      }
      lx.expect_punct(')');
    } else if (op == "ret") {
      inst.op = Opcode::Ret;
      forbid_result(lx, inst);
      Type ty = parse_type(lx);
      if (!ty.is_void()) {
        inst.ty = ty;
        inst.args.push_back(parse_operand(lx, ty));
      }
    } else {
      lx.fail("unknown opcode '" + op + "'");
    }
    if (!lx.at_end()) lx.fail("trailing tokens after instruction");
    // resolve struct references eagerly so unknown types fail here
    check_types_known(p, lx, inst.ty);
    check_types_known(p, lx, inst.ty2);
    for (const auto& a : inst.args) check_types_known(p, lx, a.ty);
    return inst;
  }

  void check_types_known(const Program& p, LineLexer& lx, const Type& t) {
    if (t.is_struct() && !p.structs_.count(t.struct_name()))
      lx.fail("unknown type '" + t.struct_name() + "'");
    if (t.is_ptr()) check_types_known(p, lx, t.pointee());
  }

  void require_result(LineLexer& lx, const Instruction& inst) {
    if (inst.result.empty()) lx.fail("instruction requires a result register");
  }
  void forbid_result(LineLexer& lx, const Instruction& inst) {
    if (!inst.result.empty()) lx.fail("instruction does not produce a result");
  }

  void compute_layout(Program& p, const std::string& name,
                      std::set<std::string>& in_progress) {
    if (p.layouts_.count(name)) return;
    if (!in_progress.insert(name).second)
      throw ParseError("type '" + name + "' is recursive by value", 0, 0);
    StructLayout l;
    std::int64_t off = 0;
    for (const Type& f : p.structs_.at(name)) {
      if (f.is_struct()) compute_layout(p, f.struct_name(), in_progress);
      if (f.is_void()) throw ParseError("void struct field in '" + name + "'", 0, 0);
      std::int64_t a = align_of(p, f);
      off = (off + a - 1) / a * a;
      l.offsets.push_back(off);
      off += size_of(p, f);
      l.align = std::max(l.align, a);
    }
    l.size = (off + l.align - 1) / l.align * l.align;
    p.layouts_[name] = std::move(l);
    in_progress.erase(name);
  }

  void validate(Program& p) {
    if (p.blocks_.empty())
      throw ParseError("program has no blocks", 0, 0);
    std::set<std::string> in_progress;
    for (const auto& [name, fields] : p.structs_) compute_layout(p, name, in_progress);
    for (const auto& b : p.blocks_) {
      if (b.insts.empty())
        throw ParseError("block '" + b.label + "' is empty", 0, 0);
      std::set<std::string> assigned;
      for (std::size_t i = 0; i < b.insts.size(); ++i) {
        const Instruction& inst = b.insts[i];
        bool last = i + 1 == b.insts.size();
        if (inst.is_terminator() != last)
          throw ParseError(last ? "block '" + b.label + "' lacks a terminator"
                                : "terminator before end of block '" + b.label + "'",
                           inst.line, 1);
        if (!inst.result.empty() && !assigned.insert(inst.result).second)
          throw ParseError("register '" + inst.result + "' assigned twice in block '" +
                               b.label + "'",
                           inst.line, 1);
        for (const std::string* t : {&inst.target, &inst.target2}) {
          if (!t->empty() && !p.block_index_.count(*t))
            throw ParseError("branch to undefined label '" + *t + "'", inst.line, 1);
        }
        if (inst.op == Opcode::Gep && !inst.gep_byte_form) {
          const auto& fields = p.structs_.at(inst.ty.struct_name());
          if (inst.field_index >= fields.size())
            throw ParseError("field index out of range", inst.line, 1);
        }
      }
    }
  }
};

Program parse_program(const std::string& text) { return Parser(text).run(); }

}  // namespace listerm::ir
