// SPDX-License-Identifier: Apache-2.0
#include "core/program.hpp"

#include <cctype>
#include <charconv>
#include <cstdio>
#include <set>
#include <sstream>

#include "core/common.hpp"

namespace tinyquant::ir {

const char* op_name(OpKind op) {
  switch (op) {
    case OpKind::MatMul: return "matmul";
    case OpKind::Add: return "add";
    case OpKind::Sub: return "sub";
    case OpKind::Mul: return "mul";
    case OpKind::ScalarMul: return "scalarmul";
    case OpKind::Sigmoid: return "sigmoid";
    case OpKind::Tanh: return "tanh";
    case OpKind::Relu: return "relu";
    case OpKind::Exp: return "exp";
    case OpKind::ArgMax: return "argmax";
    case OpKind::Reshape: return "reshape";
  }
  return "?";
}

int op_arity(OpKind op) {
  switch (op) {
    case OpKind::MatMul:
    case OpKind::Add:
    case OpKind::Sub:
    case OpKind::Mul:
      return 2;
    default:
      return 1;
  }
}

static std::optional<OpKind> op_from_name(const std::string& name) {
  static const std::map<std::string, OpKind> table = {
      {"matmul", OpKind::MatMul}, {"add", OpKind::Add},       {"sub", OpKind::Sub},
      {"mul", OpKind::Mul},       {"scalarmul", OpKind::ScalarMul},
      {"sigmoid", OpKind::Sigmoid}, {"tanh", OpKind::Tanh},   {"relu", OpKind::Relu},
      {"exp", OpKind::Exp},       {"argmax", OpKind::ArgMax}, {"reshape", OpKind::Reshape}};
  const auto it = table.find(name);
  if (it == table.end()) return std::nullopt;
  return it->second;
}

// ---------------------------------------------------------------------------
// Parser

namespace {

struct Cursor {
  std::string_view text;
  size_t pos = 0;
  int line = 0;

  [[noreturn]] void fail(const std::string& message) const {
    throw Error("line " + std::to_string(line) + ", col " + std::to_string(pos + 1) + ": " + message,
                "parse");
  }
  void skip_ws() {
    while (pos < text.size() && (text[pos] == ' ' || text[pos] == '\t')) ++pos;
  }
  bool at_end() {
    skip_ws();
    return pos >= text.size() || text[pos] == '#';
  }
  bool accept(char c) {
    skip_ws();
    if (pos < text.size() && text[pos] == c) { ++pos; return true; }
    return false;
  }
  void expect(char c) {
    if (!accept(c)) fail(std::string("expected '") + c + "'");
  }
  std::string ident() {
    skip_ws();
    size_t start = pos;
    while (pos < text.size() && (std::isalnum(static_cast<unsigned char>(text[pos])) || text[pos] == '_'))
      ++pos;
    if (pos == start) fail("expected an identifier");
    return std::string(text.substr(start, pos - start));
  }
  int integer() {
    skip_ws();
    size_t start = pos;
    while (pos < text.size() && std::isdigit(static_cast<unsigned char>(text[pos]))) ++pos;
    if (pos == start) fail("expected an integer");
    int value = 0;
    std::from_chars(text.data() + start, text.data() + pos, value);
    return value;
  }
  double number() {
    skip_ws();
    size_t start = pos;
    while (pos < text.size() && (std::isdigit(static_cast<unsigned char>(text[pos])) ||
                                 text[pos] == '+' || text[pos] == '-' || text[pos] == '.' ||
                                 text[pos] == 'e' || text[pos] == 'E'))
      ++pos;
    if (pos == start) fail("expected a number");
    try {
      return std::stod(std::string(text.substr(start, pos - start)));
    } catch (const std::exception&) {
      fail("malformed number");
    }
  }
  Shape shape() {
    skip_ws();
    if (pos >= text.size() || text[pos] != 'R') fail("expected a shape R[rows][cols]");
    ++pos;
    Shape s;
    expect('[');
    s.rows = integer();
    expect(']');
    expect('[');
    s.cols = integer();
    expect(']');
    if (s.rows <= 0 || s.cols <= 0) fail("shape dimensions must be positive");
    return s;
  }
};

}  // namespace

Program parse(std::string_view text) {
  Program program;
  std::set<std::string> defined;
  bool saw_return = false;
  int return_line = 0;

  auto define = [&](Cursor& cur, const std::string& name) {
    if (!defined.insert(name).second) cur.fail("duplicate binding '" + name + "'");
  };
  auto require_defined = [&](Cursor& cur, const std::string& name) {
    if (!defined.count(name)) cur.fail("use of undefined tensor '" + name + "'");
  };

  size_t offset = 0;
  int line_no = 0;
  while (offset <= text.size()) {
    const size_t eol = text.find('\n', offset);
    std::string_view line = text.substr(offset, eol == std::string_view::npos ? std::string_view::npos
                                                                              : eol - offset);
    ++line_no;
    Cursor cur{line, 0, line_no};
    if (!cur.at_end()) {
      if (saw_return) cur.fail("statement after return");
      const std::string head = cur.ident();
      if (head == "param") {
        ParamDecl decl;
        decl.name = cur.ident();
        define(cur, decl.name);
        cur.expect(':');
        decl.shape = cur.shape();
        cur.expect('=');
        decl.key = cur.ident();
        program.params.push_back(decl);
      } else if (head == "input") {
        if (program.input) cur.fail("at most one input tensor");
        InputDecl decl;
        decl.name = cur.ident();
        define(cur, decl.name);
        cur.expect(':');
        decl.shape = cur.shape();
        program.input = decl;
      } else if (head == "let") {
        Binding binding;
        binding.line = line_no;
        binding.name = cur.ident();
        cur.expect('=');
        const std::string op = cur.ident();
        const auto kind = op_from_name(op);
        if (!kind) cur.fail("unknown operator '" + op + "'");
        binding.expr.op = *kind;
        cur.expect('(');
        if (*kind == OpKind::ScalarMul) binding.expr.scalar = cur.number();
        if (*kind == OpKind::ScalarMul) cur.expect(',');
        for (int i = 0; i < op_arity(*kind); ++i) {
          if (i > 0) cur.expect(',');
          const std::string arg = cur.ident();
          require_defined(cur, arg);
          binding.expr.args.push_back(arg);
        }
        if (*kind == OpKind::Reshape) {
          cur.expect(',');
          binding.expr.target.rows = cur.integer();
          cur.expect(',');
          binding.expr.target.cols = cur.integer();
        }
        cur.expect(')');
        define(cur, binding.name);  // after args: a binding cannot use itself
        program.body.push_back(binding);
      } else if (head == "return") {
        program.output = cur.ident();
        require_defined(cur, program.output);
        saw_return = true;
        return_line = line_no;
      } else {
        cur.fail("unknown statement '" + head + "'");
      }
      if (!cur.at_end()) cur.fail("trailing input");
    }
    if (eol == std::string_view::npos) break;
    offset = eol + 1;
  }

  if (!saw_return) throw Error("line " + std::to_string(line_no) + ", col 1: no output (missing return)", "parse");
  (void)return_line;
  check_shapes(program);
  return program;
}

std::string to_text(const Program& program) {
  std::ostringstream out;
  char buf[64];
  for (const auto& p : program.params)
    out << "param " << p.name << " : R[" << p.shape.rows << "][" << p.shape.cols << "] = " << p.key
        << "\n";
  if (program.input)
    out << "input " << program.input->name << " : R[" << program.input->shape.rows << "]["
        << program.input->shape.cols << "]\n";
  for (const auto& b : program.body) {
    out << "let " << b.name << " = " << op_name(b.expr.op) << "(";
    if (b.expr.op == OpKind::ScalarMul) {
      std::snprintf(buf, sizeof buf, "%.17g", b.expr.scalar);
      out << buf << ", ";
    }
    for (size_t i = 0; i < b.expr.args.size(); ++i) {
      if (i) out << ", ";
      out << b.expr.args[i];
    }
    if (b.expr.op == OpKind::Reshape)
      out << ", " << b.expr.target.rows << ", " << b.expr.target.cols;
    out << ")\n";
  }
  out << "return " << program.output << "\n";
  return out.str();
}

// ---------------------------------------------------------------------------
// Shapes

bool Program::is_param(const std::string& name) const {
  for (const auto& p : params)
    if (p.name == name) return true;
  return false;
}

const Shape& Program::shape_of(const std::string& name) const {
  const auto it = shapes.find(name);
  if (it == shapes.end()) throw Error("unknown tensor '" + name + "'", "shapes");
  return it->second;
}

bool Program::output_is_label() const {
  for (const auto& b : body)
    if (b.name == output) return b.expr.op == OpKind::ArgMax;
  return false;
}

void check_shapes(Program& program) {
  program.shapes.clear();
  program.tensor_order.clear();

  auto declare = [&](const std::string& name, const Shape& shape) {
    program.shapes[name] = shape;
    program.tensor_order.push_back(name);
  };
  for (const auto& p : program.params) declare(p.name, p.shape);
  if (program.input) declare(program.input->name, program.input->shape);

  auto fail = [](const Binding& b, const std::string& message) {
    throw Error("line " + std::to_string(b.line) + ": " + message, "shapes");
  };

  for (const auto& b : program.body) {
    std::vector<Shape> arg_shapes;
    for (const auto& a : b.expr.args) arg_shapes.push_back(program.shapes.at(a));
    Shape result;
    switch (b.expr.op) {
      case OpKind::MatMul:
        if (arg_shapes[0].cols != arg_shapes[1].rows)
          fail(b, "matmul shape mismatch: " + b.expr.args[0] + " is " +
                      std::to_string(arg_shapes[0].rows) + "x" + std::to_string(arg_shapes[0].cols) +
                      ", " + b.expr.args[1] + " is " + std::to_string(arg_shapes[1].rows) + "x" +
                      std::to_string(arg_shapes[1].cols));
        result = Shape{arg_shapes[0].rows, arg_shapes[1].cols};
        break;
      case OpKind::Add:
      case OpKind::Sub:
      case OpKind::Mul:
        if (!(arg_shapes[0] == arg_shapes[1]))
          fail(b, std::string(op_name(b.expr.op)) + " shape mismatch: " + b.expr.args[0] + " is " +
                      std::to_string(arg_shapes[0].rows) + "x" + std::to_string(arg_shapes[0].cols) +
                      ", " + b.expr.args[1] + " is " + std::to_string(arg_shapes[1].rows) + "x" +
                      std::to_string(arg_shapes[1].cols));
        result = arg_shapes[0];
        break;
      case OpKind::ScalarMul:
      case OpKind::Sigmoid:
      case OpKind::Tanh:
      case OpKind::Relu:
      case OpKind::Exp:
        result = arg_shapes[0];
        break;
      case OpKind::ArgMax:
        if (arg_shapes[0].rows != 1 && arg_shapes[0].cols != 1)
          fail(b, "argmax expects a vector, " + b.expr.args[0] + " is " +
                      std::to_string(arg_shapes[0].rows) + "x" + std::to_string(arg_shapes[0].cols));
        result = Shape{1, 1};
        break;
      case OpKind::Reshape:
        if (b.expr.target.rows <= 0 || b.expr.target.cols <= 0 ||
            b.expr.target.cardinality() != arg_shapes[0].cardinality())
          fail(b, "reshape target does not preserve cardinality of " + b.expr.args[0]);
        result = b.expr.target;
        break;
    }
    declare(b.name, result);
  }
}

// ---------------------------------------------------------------------------
// Linearization

std::vector<Instruction> linearize(const Program& program) {
  std::vector<Instruction> instrs;
  instrs.reserve(program.body.size() + 1);
  for (const auto& b : program.body) {
    Instruction instr;
    instr.index = static_cast<int>(instrs.size());
    instr.op = b.expr.op;
    instr.dest = b.name;
    instr.srcs = b.expr.args;
    instr.scalar = b.expr.scalar;
    instr.target = b.expr.target;
    instrs.push_back(std::move(instr));
  }
  Instruction ret;
  ret.index = static_cast<int>(instrs.size());
  ret.is_return = true;
  ret.srcs = {program.output};
  instrs.push_back(std::move(ret));
  return instrs;
}

}  // namespace tinyquant::ir
