// SPDX-License-Identifier: Apache-2.0
//
// Exercises the shared library strictly through the public C header.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "tinyquant/tinyquant.h"

namespace {

const char* kModel =
    "param W1 : R[1][2] = W1\n"
    "param X1 : R[2][1] = X1\n"
    "param B1 : R[1][1] = B1\n"
    "let t1 = matmul(W1, X1)\n"
    "let t2 = add(t1, B1)\n"
    "return t2\n";

const char* kWeights =
    R"({"W1": [[-2.139562, 1.885351]], "X1": [[1.185109], [-2.206466]], "B1": [[0.146048]]})";

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

struct Session {
  tq_session* handle = nullptr;
  Session() { REQUIRE(tq_session_new(&handle) == TQ_OK); }
  ~Session() { tq_session_free(handle); }
};

struct OwnedString {
  char* value = nullptr;
  ~OwnedString() { tq_string_free(value); }
};

}  // namespace

TEST_CASE("version and error plumbing") {
  CHECK(std::string(tq_version()) == "1.0.0");
  Session s;
  CHECK(tq_load_model_file(s.handle, "/nonexistent/model.tq") == TQ_ERR_IO);
  CHECK(std::string(tq_last_error()).find("nonexistent") != std::string::npos);
  CHECK(tq_set_option(s.handle, "bogus", "1") == TQ_ERR_INVALID_ARGUMENT);
  CHECK(tq_set_option(s.handle, "planner", "magic") == TQ_ERR_INVALID_ARGUMENT);
  CHECK(tq_set_option(nullptr, "rep", "posit") == TQ_ERR_INVALID_ARGUMENT);
}

TEST_CASE("compile the worked example end to end") {
  Session s;
  REQUIRE(tq_load_model_text(s.handle, kModel) == TQ_OK);
  REQUIRE(tq_load_weights_text(s.handle, kWeights) == TQ_OK);
  REQUIRE(tq_set_option(s.handle, "rep", "posit") == TQ_OK);
  REQUIRE(tq_set_option(s.handle, "mem-limit", "3") == TQ_OK);
  REQUIRE(tq_set_option(s.handle, "es-low", "2") == TQ_OK);
  REQUIRE(tq_set_option(s.handle, "es-high", "2") == TQ_OK);

  const auto out_dir = std::filesystem::temp_directory_path() / "tq_capi_compile";
  std::filesystem::remove_all(out_dir);
  REQUIRE(tq_compile(s.handle, out_dir.string().c_str()) == TQ_OK);

  OwnedString report;
  REQUIRE(tq_report_json(s.handle, &report.value) == TQ_OK);
  const std::string text = report.value;
  CHECK(text.find("\"t2\": 8") != std::string::npos);
  CHECK(text.find("\"t1\": 16") != std::string::npos);
  CHECK(text.find("\"budget_satisfied\": true") != std::string::npos);

  // The report re-parses as JSON and keeps the planner ordering invariant.
  const auto parsed = nlohmann::json::parse(text);
  CHECK(parsed.at("ram").at("exact").get<long long>() <=
        parsed.at("ram").at("first_fit").get<long long>());
  CHECK(parsed.at("ram").at("exact").get<long long>() == 3);

  for (const char* artifact :
       {"report.json", "ledger.jsonl", "memory_map.json", "occupancy.txt", "timings.json"})
    CHECK(std::filesystem::exists(out_dir / artifact));

  // Byte-identical reports across runs (timings live in a separate file).
  Session again;
  REQUIRE(tq_load_model_text(again.handle, kModel) == TQ_OK);
  REQUIRE(tq_load_weights_text(again.handle, kWeights) == TQ_OK);
  REQUIRE(tq_set_option(again.handle, "rep", "posit") == TQ_OK);
  REQUIRE(tq_set_option(again.handle, "mem-limit", "3") == TQ_OK);
  REQUIRE(tq_set_option(again.handle, "es-low", "2") == TQ_OK);
  REQUIRE(tq_set_option(again.handle, "es-high", "2") == TQ_OK);
  const auto out_dir2 = std::filesystem::temp_directory_path() / "tq_capi_compile2";
  std::filesystem::remove_all(out_dir2);
  REQUIRE(tq_compile(again.handle, out_dir2.string().c_str()) == TQ_OK);
  CHECK(slurp(out_dir / "report.json") == slurp(out_dir2 / "report.json"));
  CHECK(slurp(out_dir / "ledger.jsonl") == slurp(out_dir2 / "ledger.jsonl"));
}

TEST_CASE("fixed-point compile writes model.c") {
  Session s;
  REQUIRE(tq_load_model_text(s.handle, kModel) == TQ_OK);
  REQUIRE(tq_load_weights_text(s.handle, kWeights) == TQ_OK);
  REQUIRE(tq_set_option(s.handle, "rep", "fixed") == TQ_OK);
  REQUIRE(tq_set_option(s.handle, "mem-limit", "3") == TQ_OK);
  const auto out_dir = std::filesystem::temp_directory_path() / "tq_capi_fixed";
  std::filesystem::remove_all(out_dir);
  REQUIRE(tq_compile(s.handle, out_dir.string().c_str()) == TQ_OK);
  CHECK(std::filesystem::exists(out_dir / "model.c"));
  const std::string source = slurp(out_dir / "model.c");
  CHECK(source.find("static uint8_t scratch[") != std::string::npos);
  CHECK(source.find("void predict(int32_t *output)") != std::string::npos);
}

TEST_CASE("budget-infeasible compiles return the dedicated status") {
  Session s;
  REQUIRE(tq_load_model_text(s.handle, kModel) == TQ_OK);
  REQUIRE(tq_load_weights_text(s.handle, kWeights) == TQ_OK);
  REQUIRE(tq_set_option(s.handle, "mem-limit", "0") == TQ_OK);
  CHECK(tq_compile(s.handle, nullptr) == TQ_ERR_BUDGET_EXCEEDED);
  OwnedString report;
  REQUIRE(tq_report_json(s.handle, &report.value) == TQ_OK);
  CHECK(std::string(report.value).find("\"budget_satisfied\": false") != std::string::npos);
}

TEST_CASE("plan a trace through the C API") {
  const std::string path = std::string(TQ_TEST_DATA_DIR) + "/fig_fragmentation_trace.json";
  OwnedString result;
  const auto out_dir = std::filesystem::temp_directory_path() / "tq_capi_plan";
  std::filesystem::remove_all(out_dir);
  REQUIRE(tq_plan_trace_file(path.c_str(), 1, 60.0, out_dir.string().c_str(), &result.value) ==
          TQ_OK);
  const std::string text = result.value;
  CHECK(text.find("\"first_fit_peak\": 384") != std::string::npos);
  CHECK(text.find("\"exact_peak\": 256") != std::string::npos);
  for (const char* artifact : {"plan_report.json", "memory_map.json", "occupancy.txt"})
    CHECK(std::filesystem::exists(out_dir / artifact));

  CHECK(tq_plan_trace_text("{}", 1, 60.0, nullptr, &result.value) == TQ_ERR_IO);
  // An empty trace plans to zero bytes.
  OwnedString empty;
  REQUIRE(tq_plan_trace_text(R"({"tensors": []})", 1, 60.0, nullptr, &empty.value) == TQ_OK);
  CHECK(std::string(empty.value).find("\"exact_peak\": 0") != std::string::npos);
}

TEST_CASE("demo text reproduces the published tables") {
  OwnedString text;
  REQUIRE(tq_demo_text("posit", 3.0, 1.0, &text.value) == TQ_OK);
  const std::string demo = text.value;
  CHECK(demo.find("0.45117") != std::string::npos);
  CHECK(demo.find("0.30469") != std::string::npos);
  CHECK(demo.find("promotion order: t2 t1 X1 B1 W1") != std::string::npos);
  CHECK(demo.find("0.04953") != std::string::npos);

  OwnedString fixed;
  REQUIRE(tq_demo_text("fixed", 3.0, 1.0, &fixed.value) == TQ_OK);
  CHECK(std::string(fixed.value).find("emitted C declares: static uint8_t scratch[") !=
        std::string::npos);

  // A four-byte budget admits the homogeneous 16-bit configuration.
  OwnedString roomy;
  REQUIRE(tq_demo_text("posit", 4.0, 1.0, &roomy.value) == TQ_OK);
  CHECK(std::string(roomy.value).find("t1->16 t2->16") != std::string::npos);

  OwnedString bad;
  CHECK(tq_demo_text("float", 3.0, 1.0, &bad.value) == TQ_ERR_INVALID_ARGUMENT);
}

TEST_CASE("automatic bitwidth-pair selection end to end") {
  const std::string data = std::string(TQ_TEST_DATA_DIR) + "/../../data";
  Session s;
  REQUIRE(tq_load_model_file(s.handle, (data + "/tiny_classifier.tq").c_str()) == TQ_OK);
  REQUIRE(tq_load_weights_file(s.handle, (data + "/tiny_classifier_weights.json").c_str()) ==
          TQ_OK);
  REQUIRE(tq_load_dataset_file(s.handle, (data + "/tiny_classifier_data.json").c_str()) == TQ_OK);
  REQUIRE(tq_set_option(s.handle, "rep", "posit") == TQ_OK);
  REQUIRE(tq_set_option(s.handle, "mem-limit", "64") == TQ_OK);
  REQUIRE(tq_set_option(s.handle, "auto-pair", "1") == TQ_OK);
  REQUIRE(tq_set_option(s.handle, "pair-candidates", "8,9,10,12,16") == TQ_OK);
  REQUIRE(tq_compile(s.handle, nullptr) == TQ_OK);
  OwnedString report;
  REQUIRE(tq_report_json(s.handle, &report.value) == TQ_OK);
  const std::string text = report.value;
  CHECK(text.find("\"auto_pair\"") != std::string::npos);
  // Five homogeneous runs feed the selection.
  CHECK(text.find("\"pair_selection_runs\": 5") != std::string::npos);
}

TEST_CASE("eval through the C API") {
  Session s;
  REQUIRE(tq_load_model_text(s.handle, kModel) == TQ_OK);
  REQUIRE(tq_load_weights_text(s.handle, kWeights) == TQ_OK);
  OwnedString out;
  REQUIRE(tq_eval(s.handle, "posit", 16, 2, &out.value) == TQ_OK);
  const std::string text = out.value;
  CHECK(text.find("-6.548828125") != std::string::npos);

  OwnedString float_out;
  REQUIRE(tq_eval(s.handle, "float", 32, 2, &float_out.value) == TQ_OK);
  CHECK(std::string(float_out.value).find("-6.5495") != std::string::npos);
}
