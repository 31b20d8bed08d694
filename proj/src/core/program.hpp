// SPDX-License-Identifier: Apache-2.0
//
// The tensor-program DSL: parsing, printing, shape validation and
// linearization to an indexed instruction sequence.
//
// Grammar (line oriented, '#' starts a comment):
//   param NAME : R[rows][cols] = weight-key
//   input NAME : R[rows][cols]
//   let NAME = op(arg, ...)
//   return NAME
//
// Operators: matmul(a,b), add(a,b), sub(a,b), mul(a,b) (elementwise),
// scalarmul(c,a), sigmoid(a), tanh(a), relu(a), exp(a), argmax(a),
// reshape(a,rows,cols).
#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace tinyquant::ir {

struct Shape {
  int rows = 0;
  int cols = 0;
  int cardinality() const { return rows * cols; }
  bool operator==(const Shape&) const = default;
};

enum class OpKind { MatMul, Add, Sub, Mul, ScalarMul, Sigmoid, Tanh, Relu, Exp, ArgMax, Reshape };

const char* op_name(OpKind op);
int op_arity(OpKind op);  // tensor arguments only

struct Expr {
  OpKind op = OpKind::Add;
  std::vector<std::string> args;  // tensor operands
  double scalar = 0.0;            // scalarmul constant
  Shape target{};                 // reshape target
};

struct ParamDecl {
  std::string name;
  Shape shape;
  std::string key;  // lookup key in the weights document
};

struct InputDecl {
  std::string name;
  Shape shape;
};

struct Binding {
  std::string name;
  Expr expr;
  int line = 0;
};

struct Program {
  std::vector<ParamDecl> params;
  std::optional<InputDecl> input;
  std::vector<Binding> body;
  std::string output;

  // Filled by check_shapes.
  std::map<std::string, Shape> shapes;
  std::vector<std::string> tensor_order;  // params, input, then dests

  bool is_param(const std::string& name) const;
  const Shape& shape_of(const std::string& name) const;
  // True when the returned tensor is an argmax label.
  bool output_is_label() const;
};

// Parses and validates (names and shapes). Diagnostics carry line numbers.
Program parse(std::string_view text);

// Canonical source form; parse(to_text(p)) is structurally identical to p.
std::string to_text(const Program& program);

// Shape inference and consistency checks; fills shapes and tensor_order.
void check_shapes(Program& program);

struct Instruction {
  int index = 0;
  bool is_return = false;
  OpKind op = OpKind::Add;
  std::string dest;               // empty for return
  std::vector<std::string> srcs;  // return carries the output tensor
  double scalar = 0.0;
  Shape target{};
};

// One instruction per binding in source order plus a terminal return.
std::vector<Instruction> linearize(const Program& program);

}  // namespace tinyquant::ir
