// SPDX-License-Identifier: Apache-2.0
#include "core/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "core/codegen.hpp"
#include "core/common.hpp"

namespace tinyquant::pipeline {

using nlohmann::json;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'", "io");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path + "'", "io");
  out << content;
}

const char* demo_model_text() {
  return "param W1 : R[1][2] = W1\n"
         "param X1 : R[2][1] = X1\n"
         "param B1 : R[1][1] = B1\n"
         "let t1 = matmul(W1, X1)\n"
         "let t2 = add(t1, B1)\n"
         "return t2\n";
}

const char* demo_weights_text() {
  return "{\n"
         "  \"W1\": [[-2.139562, 1.885351]],\n"
         "  \"X1\": [[1.185109], [-2.206466]],\n"
         "  \"B1\": [[0.146048]]\n"
         "}\n";
}

namespace {

template <typename Fn>
auto phase(const char* name, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const Error& e) {
    throw Error(e.what(), e.phase().empty() ? name : e.phase());
  } catch (const std::exception& e) {
    throw Error(e.what(), name);
  }
}

struct PhaseClock {
  std::map<std::string, double> seconds;
  std::chrono::steady_clock::time_point mark = std::chrono::steady_clock::now();
  void lap(const std::string& name) {
    const auto now = std::chrono::steady_clock::now();
    seconds[name] = std::chrono::duration<double>(now - mark).count();
    mark = now;
  }
};

json stats_json(const explore::Stats& stats) {
  return json{{"codegen_calls", stats.codegen_calls},
              {"execution_calls", stats.execution_calls},
              {"reference_runs", stats.reference_runs},
              {"es_selection_runs", stats.es_selection_runs},
              {"pair_selection_runs", stats.pair_selection_runs},
              {"exploration_runs", stats.exploration_runs}};
}

json map_json(const memplan::MemoryMap& map) {
  json offsets = json::object();
  for (const auto& [name, offset] : map.offsets) offsets[name] = offset;
  return json{{"peak_bytes", map.peak},
              {"offsets", offsets},
              {"optimal", map.optimal},
              {"method", map.method}};
}

std::string ledger_jsonl(const std::vector<explore::LedgerEntry>& ledger) {
  std::ostringstream out;
  for (const auto& entry : ledger) {
    json rho = json::object();
    for (const auto& [name, bits] : entry.rho) rho[name] = bits;
    out << json{{"rho", rho}, {"planned_ram_bytes", entry.planned_ram}, {"metric", entry.metric}}
               .dump()
        << "\n";
  }
  return out.str();
}

numrep::Rep parse_rep(const std::string& name) {
  const auto rep = numrep::rep_from_name(name);
  if (!rep) throw Error("unknown representation '" + name + "'", "options");
  return *rep;
}

}  // namespace

CompileOutcome compile(const std::string& model_text, const std::string& weights_text,
                       const std::string& dataset_text, const Options& options,
                       const std::string& out_dir) {
  PhaseClock clock;
  const numrep::Rep rep = parse_rep(options.rep);
  if (rep == numrep::Rep::Float)
    throw Error("compile needs a quantized representation; use eval for the float reference",
                "options");

  const ir::Program program = phase("parse", [&] { return ir::parse(model_text); });
  const exec::Weights weights = phase("weights", [&] { return exec::parse_weights(weights_text); });
  const exec::Dataset dataset = phase("dataset", [&] {
    return dataset_text.empty() ? exec::Dataset{} : exec::parse_dataset(dataset_text);
  });
  const auto instrs = ir::linearize(program);
  clock.lap("load");

  explore::Config config;
  config.low_bits = options.low_bits;
  config.high_bits = options.high_bits;
  config.es_low = options.es_low;
  config.es_high = options.es_high;
  config.memory_limit = options.memory_limit;
  config.soft_limit = options.soft_limit;
  config.exact_in_loop = options.planner == "exact";
  config.coarsen = options.coarsen;
  config.timeout_secs = options.timeout_secs;

  // The truncated-float representation has a single 16-bit format, so the
  // exploration degenerates to the homogeneous configuration.
  const bool homogeneous_only = rep == numrep::Rep::TruncFloat;
  if (homogeneous_only) {
    config.low_bits = 8;  // placeholder; never executed
    config.high_bits = 16;
  }

  explore::Session session(program, weights, dataset, rep, config);
  exec::Assignment best;
  json pair_info;
  phase("explore", [&] {
    if (options.auto_pair && !homogeneous_only) {
      const auto [low, high] = session.select_bitwidth_pair(options.pair_candidates);
      session.set_bitwidth_pair(low, high);
      pair_info = json{{"low_bits", low}, {"high_bits", high}};
    }
    if (homogeneous_only) {
      session.preprocess();
      best = session.all_at(16);
      long long category = 0;
      session.save_entry(best, session.run_metric(best, &category));
    } else {
      best = session.explore();
    }
    return 0;
  });
  clock.lap("explore");

  // Final physical plan: first-fit baseline plus the exact-cover search.
  std::vector<std::string> warnings;
  const auto ranges = memplan::live_ranges(instrs, program, best, &warnings);
  const auto first_fit = phase("plan", [&] { return memplan::solve_first_fit(ranges); });
  const auto exact = phase("plan", [&] {
    return memplan::solve_exact(ranges, options.coarsen, options.timeout_secs);
  });
  // With coarsening the exact peak can exceed the byte-granular first fit;
  // ship whichever plan is smaller.
  const memplan::MemoryMap& final_map = exact.peak <= first_fit.peak ? exact : first_fit;
  clock.lap("plan");

  CompileOutcome outcome;
  std::map<std::string, std::pair<int, int>> bits_and_scale;
  if (rep == numrep::Rep::Fixed) {
    bool emittable = true;
    for (const auto& [name, bits] : best)
      if (bits != 8 && bits != 16) emittable = false;
    if (emittable) {
      const auto emitted = phase("codegen", [&] {
        return codegen::emit_c(program, instrs, best, session.params(), weights, final_map);
      });
      outcome.c_source = emitted.source;
      bits_and_scale = emitted.bits_and_scale;
    }
  }
  clock.lap("codegen");

  const double threshold = options.memory_limit * options.soft_limit;
  outcome.budget_satisfied = static_cast<double>(final_map.peak) <= threshold;

  const auto& ledger = session.ledger();
  json report;
  report["rep"] = numrep::rep_name(rep);
  report["low_bits"] = session.config().low_bits;
  report["high_bits"] = session.config().high_bits;
  if (!pair_info.is_null()) report["auto_pair"] = pair_info;
  report["memory_limit"] = options.memory_limit;
  report["soft_limit"] = options.soft_limit;
  report["coarsen"] = options.coarsen;
  if (rep == numrep::Rep::Posit) {
    json es = json::object();
    for (const auto& [bits, value] : session.params().es_by_bits)
      es[std::to_string(bits)] = value;
    report["es"] = es;
  }
  json rho = json::object();
  for (const auto& [name, bits] : best) rho[name] = bits;
  report["rho"] = rho;
  double best_metric = 0.0;
  for (const auto& e : ledger)
    if (e.rho == best) best_metric = e.metric;
  report["metric"] = json{{"kind", dataset.has_labels() ? "accuracy" : "neg_mean_abs_error_vs_float"},
                          {"value", best_metric},
                          {"all_low", ledger.empty() ? 0.0 : ledger.front().metric},
                          {"float", session.float_metric()}};
  report["ram"] = json{{"lower_bound", memplan::lower_bound(ranges)},
                       {"first_fit", first_fit.peak},
                       {"exact", exact.peak},
                       {"exact_method", exact.method},
                       {"exact_optimal", exact.optimal},
                       {"final", final_map.peak},
                       {"final_method", final_map.method}};
  report["memory_map"] = map_json(final_map);
  json heat = json::object();
  for (const auto& [name, score] : session.heat_map().score) heat[name] = score;
  report["heat_map"] = heat;
  report["promotion_order"] = session.heat_map().order;
  report["overshooting"] = session.overshooting();
  json profile = json::object();
  for (const auto& [name, p] : session.params().profile)
    profile[name] = json{{"lo", p.lo}, {"hi", p.hi}, {"maxabs", p.maxabs}};
  report["profile"] = profile;
  if (!bits_and_scale.empty()) {
    json scales = json::object();
    for (const auto& [name, bs] : bits_and_scale)
      scales[name] = json{{"bits", bs.first}, {"scale", bs.second}};
    report["fixed_point"] = scales;
  }
  report["stats"] = stats_json(session.stats());
  report["ledger_entries"] = ledger.size();
  report["budget_satisfied"] = outcome.budget_satisfied;
  report["warnings"] = warnings;
  outcome.report = report;

  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    const auto path = [&](const char* name) {
      return (std::filesystem::path(out_dir) / name).string();
    };
    write_file(path("report.json"), report.dump(2) + "\n");
    write_file(path("ledger.jsonl"), ledger_jsonl(ledger));
    write_file(path("memory_map.json"), map_json(final_map).dump(2) + "\n");
    write_file(path("occupancy.txt"),
               codegen::occupancy_table(final_map, ranges, static_cast<int>(instrs.size())));
    if (!outcome.c_source.empty()) write_file(path("model.c"), outcome.c_source);
    clock.lap("emit");
    json timings = json::object();
    for (const auto& [name, secs] : clock.seconds) timings[name] = secs;
    write_file(path("timings.json"), timings.dump(2) + "\n");
  }
  return outcome;
}

// ---------------------------------------------------------------------------

json plan_trace(const std::string& trace_text, int coarsen, double timeout_secs,
                const std::string& out_dir) {
  const auto ranges = phase("trace", [&] { return memplan::trace_from_json(trace_text); });
  int instr_count = 0;
  for (const auto& r : ranges) instr_count = std::max(instr_count, r.end + 1);

  const auto first_fit = memplan::solve_first_fit(ranges);
  const auto exact = phase("plan", [&] { return memplan::solve_exact(ranges, coarsen, timeout_secs); });

  json result;
  result["tensors"] = ranges.size();
  result["instructions"] = instr_count;
  result["lower_bound"] = memplan::lower_bound(ranges);
  result["first_fit_peak"] = first_fit.peak;
  result["exact_peak"] = exact.peak;
  result["exact_method"] = exact.method;
  result["optimal"] = exact.optimal;
  result["memory_map"] = map_json(exact);

  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    const auto path = [&](const char* name) {
      return (std::filesystem::path(out_dir) / name).string();
    };
    write_file(path("memory_map.json"), map_json(exact).dump(2) + "\n");
    write_file(path("occupancy.txt"), codegen::occupancy_table(exact, ranges, instr_count));
    write_file(path("plan_report.json"), result.dump(2) + "\n");
  }
  return result;
}

// ---------------------------------------------------------------------------

namespace {

std::string fmt(double v, const char* spec = "%.6g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

std::string join_values(const std::vector<double>& values) {
  std::string out;
  for (size_t i = 0; i < values.size(); ++i) {
    if (i) out += ", ";
    out += fmt(values[i]);
  }
  return out;
}

}  // namespace

std::string demo_text(const std::string& rep_name, double memory_limit, double soft_limit) {
  const numrep::Rep rep = parse_rep(rep_name);
  if (rep == numrep::Rep::Float || rep == numrep::Rep::TruncFloat)
    throw Error("the demo explores bitwidths; use posit, fixed or zeroskew", "options");

  const ir::Program program = ir::parse(demo_model_text());
  const exec::Weights weights = exec::parse_weights(demo_weights_text());
  const exec::Dataset dataset;

  explore::Config config;
  config.memory_limit = memory_limit;
  config.soft_limit = soft_limit;
  config.es_low = {2};  // the walkthrough uses es = 2 at both bitwidths
  config.es_high = {2};
  explore::Session session(program, weights, dataset, rep, config);

  session.preprocess();
  const auto [low_map, high_map] = session.create_value_maps();
  const auto heat = session.create_heat_map_from(low_map, high_map);
  const auto best = session.promotion_algorithm(heat.order);

  const auto instrs = ir::linearize(program);
  const auto ranges = memplan::live_ranges(instrs, program, best);
  const auto first_fit = memplan::solve_first_fit(ranges);
  const auto exact = memplan::solve_exact(ranges);

  std::ostringstream out;
  out << "linear classifier walkthrough\n"
      << "==============================\n\n"
      << demo_model_text() << "\n"
      << "representation: " << numrep::rep_name(rep);
  if (rep == numrep::Rep::Posit)
    out << " (es: 8-bit -> " << session.params().es_for(8) << ", 16-bit -> "
        << session.params().es_for(16) << ")";
  out << "\nbitwidths: low 8, high 16\n"
      << "memory limit: " << fmt(memory_limit) << " bytes, soft limit factor " << fmt(soft_limit)
      << "\n\n";

  out << "tensor values and promotability\n"
      << "var   16-bit values            8-bit values           promotability\n";
  for (const auto& name : program.tensor_order) {
    out << name;
    for (size_t pad = name.size(); pad < 6; ++pad) out << ' ';
    std::string high = join_values(high_map.values.at(name));
    std::string low = join_values(low_map.values.at(name));
    high.resize(std::max<size_t>(high.size(), 24), ' ');
    low.resize(std::max<size_t>(low.size(), 22), ' ');
    out << high << " " << low << " " << fmt(heat.score.at(name), "%.5f") << "\n";
  }
  out << "\npromotion order:";
  for (const auto& name : heat.order) out << " " << name;
  out << "\n\n";

  out << "exploration ledger (error is |output - float reference|)\n"
      << "promoted vars                RAM  error\n";
  for (const auto& entry : session.ledger()) {
    std::string promoted;
    for (const auto& name : heat.order)
      if (entry.rho.at(name) == 16) promoted += (promoted.empty() ? "" : ", ") + name;
    if (promoted.empty()) promoted = "(none)";
    promoted.resize(std::max<size_t>(promoted.size(), 28), ' ');
    out << promoted << " " << entry.planned_ram << "    " << fmt(-entry.metric, "%.5f") << "\n";
  }

  out << "\nchosen assignment:";
  for (const auto& name : program.tensor_order) out << " " << name << "->" << best.at(name);
  out << "\nplanned RAM: first-fit " << first_fit.peak << " bytes, exact " << exact.peak
      << " bytes" << (exact.optimal ? " (optimal)" : "") << "\n\n";
  out << codegen::occupancy_table(exact, ranges, static_cast<int>(instrs.size()));

  if (rep == numrep::Rep::Fixed) {
    const auto emitted = codegen::emit_c(program, instrs, best, session.params(), weights, exact);
    out << "\nemitted C declares: static uint8_t scratch[" << emitted.scratch_bytes << "];\n";
  }
  return out.str();
}

// ---------------------------------------------------------------------------

json eval(const std::string& model_text, const std::string& weights_text,
          const std::string& dataset_text, const std::string& rep_name, int bits, int es) {
  const numrep::Rep rep = parse_rep(rep_name);
  const ir::Program program = phase("parse", [&] { return ir::parse(model_text); });
  const exec::Weights weights = phase("weights", [&] { return exec::parse_weights(weights_text); });
  const exec::Dataset dataset = phase("dataset", [&] {
    return dataset_text.empty() ? exec::Dataset{} : exec::parse_dataset(dataset_text);
  });
  const auto instrs = ir::linearize(program);

  exec::RunSpec ref_spec;
  ref_spec.program = &program;
  ref_spec.instrs = &instrs;
  ref_spec.weights = &weights;
  ref_spec.dataset = &dataset;
  ref_spec.params = numrep::ParamSet::reference();
  exec::ValueMap reference_values;
  ref_spec.log_values = true;
  const exec::RunResult reference = exec::run(ref_spec, &reference_values);

  exec::RunResult result = reference;
  if (rep != numrep::Rep::Float) {
    numrep::ParamSet params;
    params.rep = rep;
    params.es_by_bits[bits] = es;
    for (const auto& [name, values] : reference_values.values) {
      numrep::TensorProfile profile;
      profile.lo = values.empty() ? 0.0 : values[0];
      profile.hi = profile.lo;
      for (double v : values) {
        profile.lo = std::min(profile.lo, v);
        profile.hi = std::max(profile.hi, v);
      }
      profile.maxabs = std::max(std::fabs(profile.lo), std::fabs(profile.hi));
      params.profile[name] = profile;
    }
    exec::Assignment rho;
    for (const auto& name : program.tensor_order) rho[name] = bits;
    exec::RunSpec spec = ref_spec;
    spec.log_values = false;
    spec.params = params;
    spec.rho = &rho;
    result = exec::run(spec);
  }

  json out;
  out["rep"] = numrep::rep_name(rep);
  out["bits"] = bits;
  if (rep == numrep::Rep::Posit) out["es"] = es;
  out["metric_kind"] = dataset.has_labels() ? "accuracy" : "neg_mean_abs_error_vs_float";
  out["metric"] = exec::metric_against(result, dataset, reference);
  json outputs = json::array();
  for (const auto& sample : result.outputs) outputs.push_back(sample);
  out["outputs"] = outputs;
  json valid = json::array();
  for (char v : result.valid) valid.push_back(static_cast<bool>(v));
  out["valid"] = valid;
  return out;
}

}  // namespace tinyquant::pipeline
