// SPDX-License-Identifier: Apache-2.0
#include "core/codegen.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "core/common.hpp"

namespace tinyquant::codegen {

namespace {

struct TensorGen {
  int bits = 16;
  int scale = 0;
  bool in_scratch = false;
  bool is_input = false;
  long long offset = 0;
  std::string array;  // const array name for params
};

std::string load_expr(const TensorGen& t, const std::string& index) {
  if (t.is_input) return "(int64_t)input[" + index + "]";
  if (!t.in_scratch) return "(int64_t)" + t.array + "[" + index + "]";
  if (t.bits == 8)
    return "(int64_t)(int8_t)scratch[" + std::to_string(t.offset) + "u + (size_t)(" + index + ")]";
  return "(int64_t)ld16(" + std::to_string(t.offset) + "u + 2u * (size_t)(" + index + "))";
}

std::string store_stmt(const TensorGen& t, const std::string& index, const std::string& value) {
  if (t.bits == 8)
    return "scratch[" + std::to_string(t.offset) + "u + (size_t)(" + index +
           ")] = (uint8_t)(int8_t)(" + value + ");";
  return "st16(" + std::to_string(t.offset) + "u + 2u * (size_t)(" + index + "), (int16_t)(" +
         value + "));";
}

std::string sat_expr(const std::string& value, int bits) {
  const long long lo = -(1ll << (bits - 1));
  const long long hi = (1ll << (bits - 1)) - 1;
  return "sat(" + value + ", " + std::to_string(lo) + ", " + std::to_string(hi) + ")";
}

std::string rescale_expr(const std::string& value, int from, int to) {
  if (from == to) return value;
  return "rescale(" + value + ", " + std::to_string(from) + ", " + std::to_string(to) + ")";
}

const char* ctype(int bits) { return bits == 8 ? "int8_t" : "int16_t"; }

}  // namespace

Emitted emit_c(const ir::Program& program, const std::vector<ir::Instruction>& instrs,
               const exec::Assignment& rho, const numrep::ParamSet& params,
               const exec::Weights& weights, const memplan::MemoryMap& map) {
  if (params.rep != numrep::Rep::Fixed)
    throw Error("C emission supports the fixed-point representation only", "codegen");
  for (const auto& name : program.tensor_order) {
    const int bits = rho.at(name);
    if (bits != 8 && bits != 16)
      throw Error("C emission supports 8- and 16-bit tensors, got " + std::to_string(bits) +
                      " for '" + name + "'",
                  "codegen");
  }

  Emitted emitted;
  emitted.scratch_bytes = map.peak;

  std::map<std::string, TensorGen> gen;
  for (const auto& name : program.tensor_order) {
    TensorGen t;
    t.bits = rho.at(name);
    t.scale = exec::fixed_scale_of(params, name, t.bits);
    if (program.is_param(name)) {
      t.array = "W_" + name;
    } else if (program.input && program.input->name == name) {
      t.is_input = true;
    } else {
      t.in_scratch = true;
      const auto it = map.offsets.find(name);
      if (it == map.offsets.end())
        throw Error("memory map has no offset for tensor '" + name + "'", "codegen");
      t.offset = it->second;
      emitted.offsets[name] = it->second;
    }
    gen[name] = t;
  }
  for (const auto& b : program.body)
    if (b.expr.op == ir::OpKind::ArgMax) gen[b.name].scale = 0;
  for (const auto& name : program.tensor_order)
    emitted.bits_and_scale[name] = {gen[name].bits, gen[name].scale};

  bool uses_math = false, uses_st16 = false;
  for (const auto& instr : instrs) {
    if (instr.is_return) continue;
    if (instr.op == ir::OpKind::Sigmoid || instr.op == ir::OpKind::Tanh ||
        instr.op == ir::OpKind::Exp)
      uses_math = true;
    if (gen[instr.dest].in_scratch && gen[instr.dest].bits == 16) uses_st16 = true;
  }
  bool uses_ld16 = uses_st16;
  for (const auto& instr : instrs)
    for (const auto& src : instr.srcs)
      if (gen[src].in_scratch && gen[src].bits == 16) uses_ld16 = true;

  std::ostringstream out;
  const ir::Shape out_shape = program.shape_of(program.output);
  out << "/* Generated fixed-point inference code. No dynamic allocation; the\n"
         " * only mutable state is the scratch buffer below.\n"
         " *\n";
  if (program.input)
    out << " * entry: void predict(const " << ctype(gen[program.input->name].bits)
        << " *input, int32_t *output);\n"
        << " * input: " << program.input->name << ", " << program.input->shape.cardinality()
        << " words, scale " << gen[program.input->name].scale << "\n";
  else
    out << " * entry: void predict(int32_t *output);\n";
  out << " * output: " << program.output << ", " << out_shape.cardinality()
      << " words (raw fixed-point, scale " << gen[program.output].scale << ")\n"
      << " *\n"
      << " * tensor        bits  scale  placement\n";
  for (const auto& name : program.tensor_order) {
    const TensorGen& t = gen.at(name);
    out << " *   " << name;
    for (size_t pad = name.size(); pad < 12; ++pad) out << ' ';
    out << t.bits << (t.bits == 8 ? "     " : "    ") << t.scale << "\t";
    if (t.is_input) out << "input";
    else if (!t.in_scratch) out << "flash";
    else out << "scratch+" << t.offset;
    out << "\n";
  }
  out << " */\n";
  out << "#include <stddef.h>\n";
  out << "#include <stdint.h>\n";
  if (uses_math) out << "#include <math.h>\n";
  if (uses_ld16 || uses_st16) out << "#include <string.h>\n";
  out << "\n";

  // Flash-resident weights.
  for (const auto& p : program.params) {
    const TensorGen& t = gen.at(p.name);
    const auto& values = weights.by_key.at(p.key);
    const numrep::FixedFormat fmt{t.bits, t.scale};
    out << "static const " << ctype(t.bits) << " " << t.array << "[" << values.size() << "] = {";
    for (size_t i = 0; i < values.size(); ++i) {
      if (i) out << ", ";
      out << numrep::fixed_encode(values[i], fmt);
    }
    out << "};\n";
  }
  if (!program.params.empty()) out << "\n";

  if (map.peak > 0) out << "static uint8_t scratch[" << map.peak << "];\n\n";

  if (uses_ld16)
    out << "static int16_t ld16(size_t off) { int16_t v; memcpy(&v, scratch + off, 2); return v; "
           "}\n";
  if (uses_st16)
    out << "static void st16(size_t off, int16_t v) { memcpy(scratch + off, &v, 2); }\n";
  out << "static int64_t sat(int64_t v, int64_t lo, int64_t hi) { return v < lo ? lo : (v > hi ? "
         "hi : v); }\n"
         "static int64_t rescale(int64_t v, int from_scale, int to_scale) {\n"
         "  if (to_scale <= from_scale) return v >> (from_scale - to_scale);\n"
         "  return v * ((int64_t)1 << (to_scale - from_scale));\n"
         "}\n";
  if (uses_math)
    out << "static int64_t encf(double y, int scale, int64_t lo, int64_t hi) {\n"
           "  double scaled = floor(ldexp(y, scale));\n"
           "  if (!(scaled > (double)lo)) return lo;\n"
           "  if (!(scaled < (double)hi)) return hi;\n"
           "  return (int64_t)scaled;\n"
           "}\n";
  out << "\n";

  if (program.input)
    out << "void predict(const " << ctype(gen[program.input->name].bits)
        << " *input, int32_t *output) {\n";
  else
    out << "void predict(int32_t *output) {\n";

  for (const auto& instr : instrs) {
    if (instr.is_return) {
      const TensorGen& t = gen.at(instr.srcs[0]);
      const int n = program.shape_of(instr.srcs[0]).cardinality();
      out << "  for (int i = 0; i < " << n << "; ++i) output[i] = (int32_t)("
          << load_expr(t, "i") << ");\n";
      break;
    }
    const TensorGen& dst = gen.at(instr.dest);
    const ir::Shape shape = program.shape_of(instr.dest);
    auto src = [&](int i) -> const TensorGen& { return gen.at(instr.srcs[i]); };
    out << "  /* " << instr.dest << " = " << ir::op_name(instr.op) << "(";
    for (size_t i = 0; i < instr.srcs.size(); ++i) out << (i ? ", " : "") << instr.srcs[i];
    out << ") */\n  {\n";

    switch (instr.op) {
      case ir::OpKind::MatMul: {
        const ir::Shape a = program.shape_of(instr.srcs[0]);
        const ir::Shape b = program.shape_of(instr.srcs[1]);
        const int acc_scale = src(0).scale + src(1).scale;
        out << "    for (int i = 0; i < " << a.rows << "; ++i)\n"
            << "      for (int j = 0; j < " << b.cols << "; ++j) {\n"
            << "        int64_t acc = 0;\n"
            << "        for (int k = 0; k < " << a.cols << "; ++k)\n"
            << "          acc += " << load_expr(src(0), "i * " + std::to_string(a.cols) + " + k")
            << " * " << load_expr(src(1), "k * " + std::to_string(b.cols) + " + j") << ";\n"
            << "        "
            << store_stmt(dst, "i * " + std::to_string(b.cols) + " + j",
                          sat_expr(rescale_expr("acc", acc_scale, dst.scale), dst.bits))
            << "\n      }\n";
        break;
      }
      case ir::OpKind::Add:
      case ir::OpKind::Sub: {
        const int common = std::min(src(0).scale, src(1).scale);
        out << "    for (int i = 0; i < " << shape.cardinality() << "; ++i) {\n"
            << "      int64_t va = " << rescale_expr(load_expr(src(0), "i"), src(0).scale, common)
            << ";\n"
            << "      int64_t vb = " << rescale_expr(load_expr(src(1), "i"), src(1).scale, common)
            << ";\n"
            << "      "
            << store_stmt(dst, "i",
                          sat_expr(rescale_expr(
                                       instr.op == ir::OpKind::Add ? "va + vb" : "va - vb",
                                       common, dst.scale),
                                   dst.bits))
            << "\n    }\n";
        break;
      }
      case ir::OpKind::Mul: {
        const int acc_scale = src(0).scale + src(1).scale;
        out << "    for (int i = 0; i < " << shape.cardinality() << "; ++i) {\n"
            << "      int64_t p = " << load_expr(src(0), "i") << " * " << load_expr(src(1), "i")
            << ";\n"
            << "      "
            << store_stmt(dst, "i", sat_expr(rescale_expr("p", acc_scale, dst.scale), dst.bits))
            << "\n    }\n";
        break;
      }
      case ir::OpKind::ScalarMul: {
        const int cscale = exec::scalar_const_scale(instr.scalar);
        const std::int64_t c =
            numrep::fixed_encode(instr.scalar, numrep::FixedFormat{16, cscale});
        const int acc_scale = src(0).scale + cscale;
        out << "    for (int i = 0; i < " << shape.cardinality() << "; ++i) {\n"
            << "      int64_t p = (int64_t)" << c << " * " << load_expr(src(0), "i") << ";\n"
            << "      "
            << store_stmt(dst, "i", sat_expr(rescale_expr("p", acc_scale, dst.scale), dst.bits))
            << "\n    }\n";
        break;
      }
      case ir::OpKind::Relu:
        out << "    for (int i = 0; i < " << shape.cardinality() << "; ++i) {\n"
            << "      int64_t v = " << load_expr(src(0), "i") << ";\n"
            << "      if (v < 0) v = 0;\n"
            << "      "
            << store_stmt(dst, "i",
                          sat_expr(rescale_expr("v", src(0).scale, dst.scale), dst.bits))
            << "\n    }\n";
        break;
      case ir::OpKind::Sigmoid:
      case ir::OpKind::Tanh:
      case ir::OpKind::Exp: {
        const char* fn = instr.op == ir::OpKind::Tanh ? "tanh(x)"
                         : instr.op == ir::OpKind::Exp ? "exp(x)"
                                                       : "1.0 / (1.0 + exp(-x))";
        const long long lo = -(1ll << (dst.bits - 1));
        const long long hi = (1ll << (dst.bits - 1)) - 1;
        out << "    for (int i = 0; i < " << shape.cardinality() << "; ++i) {\n"
            << "      double x = ldexp((double)" << load_expr(src(0), "i") << ", "
            << -src(0).scale << ");\n"
            << "      double y = " << fn << ";\n"
            << "      "
            << store_stmt(dst, "i",
                          "encf(y, " + std::to_string(dst.scale) + ", " + std::to_string(lo) +
                              ", " + std::to_string(hi) + ")")
            << "\n    }\n";
        break;
      }
      case ir::OpKind::ArgMax: {
        const int n = program.shape_of(instr.srcs[0]).cardinality();
        out << "    int best = 0;\n"
            << "    for (int i = 1; i < " << n << "; ++i)\n"
            << "      if (" << load_expr(src(0), "i") << " > " << load_expr(src(0), "best")
            << ") best = i;\n"
            << "    " << store_stmt(dst, "0", "best") << "\n";
        break;
      }
      case ir::OpKind::Reshape:
        out << "    for (int i = 0; i < " << shape.cardinality() << "; ++i)\n"
            << "      "
            << store_stmt(dst, "i",
                          sat_expr(rescale_expr(load_expr(src(0), "i"), src(0).scale, dst.scale),
                                   dst.bits))
            << "\n";
        break;
    }
    out << "  }\n";
  }
  out << "}\n";

  emitted.source = out.str();
  return emitted;
}

// ---------------------------------------------------------------------------

std::string occupancy_table(const memplan::MemoryMap& map,
                            const std::vector<memplan::LiveRange>& ranges, int instr_count) {
  std::ostringstream out;
  out << "memory map: peak " << map.peak << " bytes, " << instr_count << " instructions, method "
      << map.method << (map.optimal ? " (optimal)" : "") << "\n";
  if (ranges.empty() || map.peak == 0) return out.str();

  // One letter per tensor, in map order.
  std::map<std::string, char> letter;
  {
    char next = 'A';
    for (const auto& r : ranges)
      if (!letter.count(r.name)) {
        letter[r.name] = next;
        next = next == 'Z' ? 'a' : static_cast<char>(next + 1);
      }
  }

  auto row_pattern = [&](long long byte) {
    std::string cells(static_cast<size_t>(instr_count), '.');
    for (const auto& r : ranges) {
      const long long off = map.offsets.at(r.name);
      if (byte < off || byte >= off + r.size_bytes) continue;
      for (int x = r.start; x <= r.end && x < instr_count; ++x) cells[x] = letter[r.name];
    }
    return cells;
  };

  // Byte rows top-down, collapsing runs with identical occupancy.
  std::vector<std::pair<std::pair<long long, long long>, std::string>> rows;
  for (long long byte = 0; byte < map.peak; ++byte) {
    const std::string cells = row_pattern(byte);
    if (!rows.empty() && rows.back().second == cells)
      rows.back().first.second = byte;
    else
      rows.push_back({{byte, byte}, cells});
  }
  out << "bytes (top-down) x instructions 0.." << instr_count - 1 << "\n";
  for (auto it = rows.rbegin(); it != rows.rend(); ++it) {
    out << "  " << it->first.first << ".." << it->first.second << "\t| ";
    for (char c : it->second) out << c << ' ';
    out << "\n";
  }
  out << "legend:";
  for (const auto& r : ranges)
    out << " " << letter[r.name] << "=" << r.name << "@" << map.offsets.at(r.name) << "("
        << r.size_bytes << "B,[" << r.start << "," << r.end << "])";
  out << "\n";
  return out.str();
}

}  // namespace tinyquant::codegen
