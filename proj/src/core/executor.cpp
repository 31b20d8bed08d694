// SPDX-License-Identifier: Apache-2.0
#include "core/executor.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "core/common.hpp"

namespace tinyquant::exec {

using nlohmann::json;

namespace {

// Penalty per output element of an invalid (NaR/NaN) sample; keeps error
// aggregation finite while dominating any real deviation.
constexpr double kInvalidPenalty = 1e300;

std::vector<double> flatten_numeric(const json& node, const std::string& what) {
  std::vector<double> out;
  if (!node.is_array()) throw Error(what + ": expected an array", "io");
  for (const auto& item : node) {
    if (item.is_number()) {
      out.push_back(item.get<double>());
    } else if (item.is_array()) {
      for (const auto& inner : item) {
        if (!inner.is_number()) throw Error(what + ": expected numbers", "io");
        out.push_back(inner.get<double>());
      }
    } else {
      throw Error(what + ": expected numbers or rows of numbers", "io");
    }
  }
  for (double v : out)
    if (!std::isfinite(v)) throw Error(what + ": values must be finite", "io");
  return out;
}

}  // namespace

Weights parse_weights(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const std::exception& e) {
    throw Error(std::string("weights: ") + e.what(), "io");
  }
  if (!doc.is_object()) throw Error("weights: expected a JSON object", "io");
  Weights weights;
  for (const auto& [key, value] : doc.items())
    weights.by_key[key] = flatten_numeric(value, "weights['" + key + "']");
  return weights;
}

Dataset parse_dataset(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const std::exception& e) {
    throw Error(std::string("dataset: ") + e.what(), "io");
  }
  if (!doc.is_object()) throw Error("dataset: expected a JSON object", "io");
  Dataset dataset;
  if (doc.contains("inputs")) {
    if (!doc["inputs"].is_array()) throw Error("dataset: 'inputs' must be an array", "io");
    for (const auto& sample : doc["inputs"])
      dataset.inputs.push_back(flatten_numeric(sample, "dataset input"));
  }
  if (doc.contains("labels")) {
    if (!doc["labels"].is_array()) throw Error("dataset: 'labels' must be an array", "io");
    for (const auto& label : doc["labels"]) {
      if (!label.is_number_integer()) throw Error("dataset: labels must be integers", "io");
      dataset.labels.push_back(label.get<int>());
    }
  }
  return dataset;
}

size_t Dataset::sample_count(const ir::Program& program) const {
  return program.input ? inputs.size() : 1;
}

// ---------------------------------------------------------------------------
// Quantize-compute-quantize execution

namespace {

struct Frame {
  std::map<std::string, std::vector<double>> values;
  bool valid = true;
};

void quantize_into(std::vector<double>& values, const numrep::Codec& codec, bool* valid) {
  for (double& v : values) {
    const auto q = codec.quantize(v);
    if (q) {
      v = *q;
    } else {
      v = std::numeric_limits<double>::quiet_NaN();
      *valid = false;
    }
  }
}

std::vector<double> eval_op(const ir::Instruction& instr, const ir::Program& program,
                            const Frame& frame) {
  auto arg = [&](int i) -> const std::vector<double>& { return frame.values.at(instr.srcs[i]); };
  const ir::Shape out_shape = program.shape_of(instr.dest);
  std::vector<double> out(static_cast<size_t>(out_shape.cardinality()));

  switch (instr.op) {
    case ir::OpKind::MatMul: {
      const ir::Shape a = program.shape_of(instr.srcs[0]);
      const ir::Shape b = program.shape_of(instr.srcs[1]);
      for (int i = 0; i < a.rows; ++i)
        for (int j = 0; j < b.cols; ++j) {
          double acc = 0.0;
          for (int k = 0; k < a.cols; ++k)
            acc += arg(0)[i * a.cols + k] * arg(1)[k * b.cols + j];
          out[i * b.cols + j] = acc;
        }
      break;
    }
    case ir::OpKind::Add:
      for (size_t i = 0; i < out.size(); ++i) out[i] = arg(0)[i] + arg(1)[i];
      break;
    case ir::OpKind::Sub:
      for (size_t i = 0; i < out.size(); ++i) out[i] = arg(0)[i] - arg(1)[i];
      break;
    case ir::OpKind::Mul:
      for (size_t i = 0; i < out.size(); ++i) out[i] = arg(0)[i] * arg(1)[i];
      break;
    case ir::OpKind::ScalarMul:
      for (size_t i = 0; i < out.size(); ++i) out[i] = instr.scalar * arg(0)[i];
      break;
    case ir::OpKind::Sigmoid:
      for (size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-arg(0)[i]));
      break;
    case ir::OpKind::Tanh:
      for (size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(arg(0)[i]);
      break;
    case ir::OpKind::Relu:
      for (size_t i = 0; i < out.size(); ++i) out[i] = std::max(0.0, arg(0)[i]);
      break;
    case ir::OpKind::Exp:
      for (size_t i = 0; i < out.size(); ++i) out[i] = std::exp(arg(0)[i]);
      break;
    case ir::OpKind::ArgMax: {
      size_t best = 0;
      for (size_t i = 1; i < arg(0).size(); ++i)
        if (arg(0)[i] > arg(0)[best]) best = i;
      out[0] = static_cast<double>(best);
      break;
    }
    case ir::OpKind::Reshape:
      out = arg(0);
      break;
  }
  return out;
}

}  // namespace

RunResult run(const RunSpec& spec, ValueMap* log) {
  const ir::Program& program = *spec.program;
  const bool reference = spec.params.rep == numrep::Rep::Float;
  if (!reference) {
    if (!spec.rho) throw Error("bitwidth assignment required for a quantized run", "exec");
    for (const auto& name : program.tensor_order)
      if (!spec.rho->count(name))
        throw Error("bitwidth assignment is missing tensor '" + name + "'", "exec");
  }
  auto codec_of = [&](const std::string& tensor) {
    return spec.params.codec_for(tensor, spec.rho->at(tensor));
  };

  // Resolve and (for quantized runs) encode the read-only parameters once.
  std::map<std::string, std::vector<double>> param_values;
  bool params_valid = true;
  for (const auto& p : program.params) {
    const auto it = spec.weights->by_key.find(p.key);
    if (it == spec.weights->by_key.end())
      throw Error("weights document has no entry '" + p.key + "'", "weights");
    if (static_cast<int>(it->second.size()) != p.shape.cardinality())
      throw Error("weights entry '" + p.key + "' has " + std::to_string(it->second.size()) +
                      " values, tensor " + p.name + " needs " + std::to_string(p.shape.cardinality()),
                  "weights");
    std::vector<double> values = it->second;
    if (!reference) quantize_into(values, codec_of(p.name), &params_valid);
    param_values[p.name] = std::move(values);
  }

  const size_t samples = spec.dataset->sample_count(program);
  if (program.input && samples == 0) throw Error("dataset is empty", "exec");
  if (program.input)
    for (const auto& sample : spec.dataset->inputs)
      if (static_cast<int>(sample.size()) != program.input->shape.cardinality())
        throw Error("dataset sample does not match the input shape", "exec");

  RunResult result;
  result.classifier = program.output_is_label();
  const bool want_log = spec.log_values && log;
  if (want_log) log->values.clear();
  auto log_tensor = [&](const std::string& name, const std::vector<double>& values) {
    if (!want_log) return;
    auto& sink = log->values[name];
    sink.insert(sink.end(), values.begin(), values.end());
  };

  for (size_t s = 0; s < samples; ++s) {
    Frame frame;
    frame.valid = params_valid;
    for (const auto& [name, values] : param_values) {
      frame.values[name] = values;
      log_tensor(name, values);
    }
    if (program.input) {
      std::vector<double> input = spec.dataset->inputs[s];
      if (!reference) quantize_into(input, codec_of(program.input->name), &frame.valid);
      log_tensor(program.input->name, input);
      frame.values[program.input->name] = std::move(input);
    }

    for (const auto& instr : *spec.instrs) {
      if (instr.is_return) {
        result.outputs.push_back(frame.values.at(instr.srcs[0]));
        break;
      }
      std::vector<double> dest = eval_op(instr, program, frame);
      // Labels stay exact integers; everything else re-enters the
      // representation at the destination's bitwidth.
      if (!reference && instr.op != ir::OpKind::ArgMax)
        quantize_into(dest, codec_of(instr.dest), &frame.valid);
      for (double v : dest)
        if (std::isnan(v)) frame.valid = false;
      log_tensor(instr.dest, dest);
      frame.values[instr.dest] = std::move(dest);
    }
    result.valid.push_back(frame.valid ? 1 : 0);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Metrics

double accuracy(const RunResult& result, const std::vector<int>& labels) {
  if (labels.size() != result.outputs.size())
    throw Error("label count does not match the sample count", "exec");
  if (result.outputs.empty()) throw Error("no samples to score", "exec");
  size_t correct = 0;
  for (size_t i = 0; i < labels.size(); ++i) {
    if (!result.valid[i]) continue;
    if (static_cast<int>(std::llround(result.outputs[i][0])) == labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

double disagreement(const RunResult& result, const RunResult& reference) {
  if (result.outputs.size() != reference.outputs.size())
    throw Error("disagreement: sample counts differ", "exec");
  if (result.classifier) {
    double count = 0;
    for (size_t i = 0; i < result.outputs.size(); ++i) {
      if (!result.valid[i] ||
          std::llround(result.outputs[i][0]) != std::llround(reference.outputs[i][0]))
        count += 1;
    }
    return count;
  }
  double total = 0.0;
  size_t elements = 0;
  for (size_t i = 0; i < result.outputs.size(); ++i) {
    if (result.outputs[i].size() != reference.outputs[i].size())
      throw Error("disagreement: output lengths differ", "exec");
    for (size_t j = 0; j < result.outputs[i].size(); ++j) {
      total += result.valid[i] ? std::fabs(result.outputs[i][j] - reference.outputs[i][j])
                               : kInvalidPenalty;
      ++elements;
    }
  }
  if (elements == 0) throw Error("disagreement: no outputs", "exec");
  return total / static_cast<double>(elements);
}

double metric_against(const RunResult& result, const Dataset& dataset,
                      const RunResult& float_ref) {
  if (dataset.has_labels()) return accuracy(result, dataset.labels);
  return -disagreement(result, float_ref);
}

// ---------------------------------------------------------------------------
// Integer fixed-point mode

int fixed_scale_of(const numrep::ParamSet& params, const std::string& tensor, int bits) {
  const auto it = params.profile.find(tensor);
  if (it == params.profile.end())
    throw Error("no runtime profile for tensor '" + tensor + "'", "exec");
  return numrep::fixed_scale_for(it->second.maxabs, bits);
}

int scalar_const_scale(double value) {
  return numrep::fixed_scale_for(std::fabs(value), 16);
}

namespace {

// Shift a value between power-of-two scales: right shifts truncate toward
// minus infinity (arithmetic shift), left shifts multiply.
std::int64_t rescale(std::int64_t v, int from_scale, int to_scale) {
  if (to_scale <= from_scale) return v >> (from_scale - to_scale);
  return v * (std::int64_t{1} << (to_scale - from_scale));
}

std::int64_t saturate(std::int64_t v, int bits) {
  return std::clamp(v, numrep::fixed_min(bits), numrep::fixed_max(bits));
}

std::int64_t encode_double(double y, int scale, int bits) {
  const double scaled = std::floor(std::ldexp(y, scale));
  if (!(scaled > static_cast<double>(numrep::fixed_min(bits))))
    return numrep::fixed_min(bits);
  if (!(scaled < static_cast<double>(numrep::fixed_max(bits))))
    return numrep::fixed_max(bits);
  return static_cast<std::int64_t>(scaled);
}

}  // namespace

IntRunResult run_fixed_integer(const ir::Program& program,
                               const std::vector<ir::Instruction>& instrs,
                               const Weights& weights, const Dataset& dataset,
                               const numrep::ParamSet& params, const Assignment& rho) {
  if (params.rep != numrep::Rep::Fixed)
    throw Error("integer mode is defined for fixed-point only", "exec");

  struct TensorInfo {
    int bits = 16;
    int scale = 0;
  };
  std::map<std::string, TensorInfo> info;
  std::map<std::string, bool> is_label;
  for (const auto& name : program.tensor_order) {
    TensorInfo ti;
    ti.bits = rho.at(name);
    ti.scale = fixed_scale_of(params, name, ti.bits);
    info[name] = ti;
  }
  for (const auto& b : program.body)
    if (b.expr.op == ir::OpKind::ArgMax) info[b.name].scale = 0;  // labels are plain integers

  std::map<std::string, std::vector<std::int64_t>> consts;
  for (const auto& p : program.params) {
    const auto& values = weights.by_key.at(p.key);
    const numrep::FixedFormat fmt{info[p.name].bits, info[p.name].scale};
    std::vector<std::int64_t> encoded(values.size());
    for (size_t i = 0; i < values.size(); ++i) encoded[i] = numrep::fixed_encode(values[i], fmt);
    consts[p.name] = std::move(encoded);
  }

  IntRunResult result;
  const size_t samples = dataset.sample_count(program);
  for (size_t s = 0; s < samples; ++s) {
    std::map<std::string, std::vector<std::int64_t>> frame = consts;
    if (program.input) {
      const numrep::FixedFormat fmt{info[program.input->name].bits,
                                    info[program.input->name].scale};
      std::vector<std::int64_t> encoded(dataset.inputs[s].size());
      for (size_t i = 0; i < encoded.size(); ++i)
        encoded[i] = numrep::fixed_encode(dataset.inputs[s][i], fmt);
      frame[program.input->name] = std::move(encoded);
    }

    for (const auto& instr : instrs) {
      if (instr.is_return) {
        result.outputs.push_back(frame.at(instr.srcs[0]));
        break;
      }
      const TensorInfo dst = info.at(instr.dest);
      auto src_info = [&](int i) { return info.at(instr.srcs[i]); };
      auto arg = [&](int i) -> const std::vector<std::int64_t>& { return frame.at(instr.srcs[i]); };
      const ir::Shape out_shape = program.shape_of(instr.dest);
      std::vector<std::int64_t> out(static_cast<size_t>(out_shape.cardinality()));

      switch (instr.op) {
        case ir::OpKind::MatMul: {
          const ir::Shape a = program.shape_of(instr.srcs[0]);
          const ir::Shape b = program.shape_of(instr.srcs[1]);
          const int acc_scale = src_info(0).scale + src_info(1).scale;
          for (int i = 0; i < a.rows; ++i)
            for (int j = 0; j < b.cols; ++j) {
              std::int64_t acc = 0;
              for (int k = 0; k < a.cols; ++k)
                acc += arg(0)[i * a.cols + k] * arg(1)[k * b.cols + j];
              out[i * b.cols + j] = saturate(rescale(acc, acc_scale, dst.scale), dst.bits);
            }
          break;
        }
        case ir::OpKind::Add:
        case ir::OpKind::Sub: {
          // Align both operands at the smaller scale before combining.
          const int common = std::min(src_info(0).scale, src_info(1).scale);
          for (size_t i = 0; i < out.size(); ++i) {
            const std::int64_t va = rescale(arg(0)[i], src_info(0).scale, common);
            const std::int64_t vb = rescale(arg(1)[i], src_info(1).scale, common);
            const std::int64_t r = instr.op == ir::OpKind::Add ? va + vb : va - vb;
            out[i] = saturate(rescale(r, common, dst.scale), dst.bits);
          }
          break;
        }
        case ir::OpKind::Mul: {
          const int acc_scale = src_info(0).scale + src_info(1).scale;
          for (size_t i = 0; i < out.size(); ++i)
            out[i] = saturate(rescale(arg(0)[i] * arg(1)[i], acc_scale, dst.scale), dst.bits);
          break;
        }
        case ir::OpKind::ScalarMul: {
          const int cscale = scalar_const_scale(instr.scalar);
          const std::int64_t c = numrep::fixed_encode(instr.scalar, numrep::FixedFormat{16, cscale});
          const int acc_scale = src_info(0).scale + cscale;
          for (size_t i = 0; i < out.size(); ++i)
            out[i] = saturate(rescale(c * arg(0)[i], acc_scale, dst.scale), dst.bits);
          break;
        }
        case ir::OpKind::Relu:
          for (size_t i = 0; i < out.size(); ++i) {
            const std::int64_t v = arg(0)[i] < 0 ? 0 : arg(0)[i];
            out[i] = saturate(rescale(v, src_info(0).scale, dst.scale), dst.bits);
          }
          break;
        case ir::OpKind::Sigmoid:
        case ir::OpKind::Tanh:
        case ir::OpKind::Exp:
          // Same fallback as the emitted code: through double precision.
          for (size_t i = 0; i < out.size(); ++i) {
            const double x = std::ldexp(static_cast<double>(arg(0)[i]), -src_info(0).scale);
            double y = 0.0;
            if (instr.op == ir::OpKind::Sigmoid) y = 1.0 / (1.0 + std::exp(-x));
            if (instr.op == ir::OpKind::Tanh) y = std::tanh(x);
            if (instr.op == ir::OpKind::Exp) y = std::exp(x);
            out[i] = encode_double(y, dst.scale, dst.bits);
          }
          break;
        case ir::OpKind::ArgMax: {
          size_t best = 0;
          for (size_t i = 1; i < arg(0).size(); ++i)
            if (arg(0)[i] > arg(0)[best]) best = i;
          out[0] = static_cast<std::int64_t>(best);
          break;
        }
        case ir::OpKind::Reshape:
          for (size_t i = 0; i < out.size(); ++i)
            out[i] = saturate(rescale(arg(0)[i], src_info(0).scale, dst.scale), dst.bits);
          break;
      }
      frame[instr.dest] = std::move(out);
    }
  }
  return result;
}

}  // namespace tinyquant::exec
