#pragma once

// Mini-IR: types, instructions, programs, a fail-closed textual parser, and
// struct memory layout (offsets by declaration order, each field aligned to
// its own alignment, struct size rounded up to the maximal field alignment).

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace listerm::ir {

class Type {
 public:
  enum class Kind { Int, Ptr, Struct, Void };

  static Type int_ty(int bits);
  static Type ptr_to(const Type& pointee);
  static Type struct_ty(std::string name);
  static Type void_ty();

  Kind kind() const { return kind_; }
  int bits() const { return bits_; }
  const Type& pointee() const { return *pointee_; }
  const std::string& struct_name() const { return name_; }

  bool is_int() const { return kind_ == Kind::Int; }
  bool is_ptr() const { return kind_ == Kind::Ptr; }
  bool is_struct() const { return kind_ == Kind::Struct; }
  bool is_void() const { return kind_ == Kind::Void; }

  std::string str() const;
  bool operator==(const Type& o) const;
  bool operator!=(const Type& o) const { return !(*this == o); }

 private:
  Kind kind_ = Kind::Void;
  int bits_ = 0;
  std::shared_ptr<Type> pointee_;
  std::string name_;
};

struct Operand {
  enum class Kind { Reg, IntLit, Null };
  Kind kind = Kind::IntLit;
  std::string reg;
  std::int64_t value = 0;
  Type ty;

  static Operand make_reg(std::string name, Type ty);
  static Operand make_int(std::int64_t v, Type ty);
  static Operand make_null(Type ty);
  bool is_reg() const { return kind == Kind::Reg; }
  std::string str() const;
};

enum class Opcode {
  Load, Store, Icmp, Br, Add, Sub, Mul, Alloca, Bitcast, Gep, Call, Ret, Zext, Sext
};

enum class IcmpPred { Eq, Ne, Ult, Ule, Ugt, Uge, Slt, Sle, Sgt, Sge };

enum class Intrinsic { Malloc, NondetI32, NondetU32, NondetI64 };

struct Instruction {
  Opcode op;
  std::string result;          // assigned register, empty if none
  Type ty;                     // value type (loaded/stored/compared/alloca'd/ret)
  Type ty2;                    // bitcast/zext/sext target type; gep pointer type
  IcmpPred pred = IcmpPred::Eq;
  Intrinsic callee = Intrinsic::Malloc;
  std::vector<Operand> args;
  std::string target;          // br: taken / unconditional label
  std::string target2;         // br: fallthrough label
  std::size_t field_index = 0; // gep struct form
  bool gep_byte_form = false;
  int line = 0;

  bool is_terminator() const { return op == Opcode::Br || op == Opcode::Ret; }
  std::string str() const;
};

struct Block {
  std::string label;
  std::vector<Instruction> insts;
};

struct StructLayout {
  std::vector<std::int64_t> offsets;
  std::int64_t size = 0;
  std::int64_t align = 1;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(std::string msg, int line, int col)
      : std::runtime_error(std::move(msg)), line(line), col(col) {}
  int line;
  int col;
};

class Program {
 public:
  const std::vector<Block>& blocks() const { return blocks_; }
  const Block& block(const std::string& label) const;
  bool has_block(const std::string& label) const { return block_index_.count(label) != 0; }
  const std::string& entry_label() const { return blocks_.front().label; }
  const std::map<std::string, std::vector<Type>>& struct_types() const { return structs_; }
  const std::vector<Type>& struct_fields(const std::string& name) const;
  const StructLayout& layout(const std::string& struct_name) const;
  const std::string& function_name() const { return fn_name_; }
  const Type& return_type() const { return ret_ty_; }

  std::string str() const;

  friend class Parser;

 private:
  std::vector<Block> blocks_;
  std::map<std::string, int> block_index_;
  std::map<std::string, std::vector<Type>> structs_;
  std::map<std::string, StructLayout> layouts_;
  std::string fn_name_;
  Type ret_ty_;
};

// Parses and validates a program; throws ParseError with line/column on
// syntax errors, unknown types, duplicate labels, missing terminators, and
// branches to undefined labels. Struct layouts are computed eagerly.
Program parse_program(const std::string& text);

std::int64_t size_of(const Program& p, const Type& ty);
std::int64_t align_of(const Program& p, const Type& ty);
std::int64_t field_offset(const Program& p, const std::string& struct_name, std::size_t k);

}  // namespace listerm::ir
