#pragma once

// Fill-in-the-blank accuracy evaluation through the full prompt pipeline, and
// the training-data ratio sweep.

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "fllm/catalog.hpp"
#include "fllm/chat.hpp"
#include "fllm/embedding.hpp"
#include "fllm/error.hpp"
#include "fllm/inference.hpp"
#include "fllm/parallel.hpp"
#include "fllm/qagen.hpp"
#include "fllm/retrieval.hpp"
#include "fllm/rng.hpp"
#include "fllm/vector_index.hpp"

namespace fllm {

/// Published FITB accuracies (percent) used to annotate reports. These are
/// reference numbers only; nothing here recomputes them.
struct BaselineRow {
  std::string_view method;
  double disjoint;
  double joint;
};

inline constexpr std::array<BaselineRow, 5> kPublishedFitb = {{
    {"Type-Aware", 55.65, 57.83},
    {"SCE-Net Average", 53.67, 59.07},
    {"CSA-Net", 59.26, 63.73},
    {"OutfitTransformer", 59.48, 67.10},
    {"FashionLLM", 62.17, 67.21},
}};

struct PipelineConfig {
  std::shared_ptr<ChatBackend> backend;
  /// Required when retrieval is on.
  std::shared_ptr<EmbeddingProvider> provider;
  std::shared_ptr<const VectorIndex> index;
  bool retrieval = false;
  std::size_t k_per_path = 5;
  std::size_t k_final = 5;
  PromptTemplates templates;
  std::string model = "fllm";
  int max_tokens = 16;
  std::size_t concurrency = 1;
  bool record_latency = true;
  /// "joint" or "disjoint".
  std::string dataset_tag = "joint";
  /// Seeds and other settings folded into the report fingerprint.
  std::map<std::string, std::string> extra;
};

struct QuestionLog {
  std::string qid;
  std::optional<int> predicted;
  int truth = 0;
  ParseConfidence confidence = ParseConfidence::failed;
  double latency_ms = 0.0;
  /// Set when the backend failed; such questions are not scored.
  std::string error;

  bool operator==(const QuestionLog&) const = default;
};

struct EvalReport {
  std::string dataset_tag = "joint";
  std::size_t n_questions = 0;
  std::size_t n_correct = 0;
  std::size_t n_parse_failed = 0;
  std::size_t n_backend_errors = 0;
  double accuracy = 0.0;
  bool retrieval = false;
  /// Some questions could not be answered because the backend failed.
  bool incomplete = false;
  std::map<std::string, std::string> config;
  std::string config_fingerprint;
  /// Sorted by qid.
  std::vector<QuestionLog> log;

  bool operator==(const EvalReport&) const = default;
};

inline std::map<std::string, std::string> describe(const PipelineConfig& cfg) {
  std::map<std::string, std::string> out = cfg.extra;
  out["backend"] = cfg.backend ? cfg.backend->kind() : "none";
  out["model"] = cfg.model;
  out["retrieval"] = cfg.retrieval ? "on" : "off";
  out["k_per_path"] = std::to_string(cfg.k_per_path);
  out["k_final"] = std::to_string(cfg.k_final);
  out["char_budget"] = std::to_string(cfg.templates.char_budget);
  if (cfg.provider) out["embedder"] = cfg.provider->fingerprint();
  return out;
}

inline std::string fingerprint_of(const std::map<std::string, std::string>& config) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (const auto& [k, v] : config) {
    h = fnv1a64(k, h);
    h = fnv1a64("=", h);
    h = fnv1a64(v, h);
    h = fnv1a64(";", h);
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

/// Recount totals and accuracy from the per-question log.
inline void recount(EvalReport& report) {
  report.n_questions = report.n_correct = report.n_parse_failed = report.n_backend_errors = 0;
  for (const auto& entry : report.log) {
    if (!entry.error.empty()) {
      ++report.n_backend_errors;
      continue;
    }
    ++report.n_questions;
    if (entry.confidence == ParseConfidence::failed) {
      ++report.n_parse_failed;
    } else if (entry.predicted && *entry.predicted == entry.truth) {
      ++report.n_correct;
    }
  }
  report.incomplete = report.n_backend_errors > 0;
  report.accuracy = report.n_questions == 0
                        ? 0.0
                        : static_cast<double>(report.n_correct) / static_cast<double>(report.n_questions);
}

/// Render the exact request the pipeline sends for one question.
inline ChatRequest fitb_request(const FITBQuestion& q, const Catalog& catalog, const PipelineConfig& cfg) {
  PromptInputs inputs;
  for (const auto& id : q.context_item_ids) {
    const Item* item = catalog.find_item(id);
    if (!item) throw Error(ErrorCode::not_found, "question " + q.qid + " names unknown item " + id);
    inputs.items.push_back(*item);
  }
  for (const auto& id : q.candidates) {
    const Item* item = catalog.find_item(id);
    if (!item) throw Error(ErrorCode::not_found, "question " + q.qid + " names unknown item " + id);
    inputs.candidates.push_back(*item);
  }
  std::vector<ContextDoc> context;
  if (cfg.retrieval) {
    if (!cfg.index || !cfg.provider) throw Error(ErrorCode::invalid_argument, "retrieval needs an index and embedder");
    QueryContext ctx;
    ctx.query_items = q.context_item_ids;
    ctx.k_per_path = cfg.k_per_path;
    ctx.k_final = cfg.k_final;
    const RetrievedContext retrieved = retrieve(ctx, catalog, *cfg.index, *cfg.provider);
    context = resolve_context(retrieved.fused, *cfg.index);
  }
  const PromptBundle bundle = assemble_prompt(Task::fitb, inputs, context, cfg.templates);
  ChatRequest request;
  request.model = cfg.model;
  request.temperature = 0.0;
  request.max_tokens = cfg.max_tokens;
  request.messages = bundle.messages();
  return request;
}

inline EvalReport run_fitb_eval(const std::vector<FITBQuestion>& questions, const Catalog& catalog,
                                const PipelineConfig& cfg) {
  if (questions.empty()) throw Error(ErrorCode::invalid_argument, "no questions to evaluate");
  if (!cfg.backend) throw Error(ErrorCode::invalid_argument, "no chat backend configured");

  EvalReport report;
  report.dataset_tag = cfg.dataset_tag;
  report.retrieval = cfg.retrieval;
  report.config = describe(cfg);
  report.config_fingerprint = fingerprint_of(report.config);
  report.log.resize(questions.size());

  parallel_for(questions.size(), cfg.concurrency, [&](std::size_t i) {
    const FITBQuestion& q = questions[i];
    QuestionLog& entry = report.log[i];
    entry.qid = q.qid;
    entry.truth = q.answer_index;
    const auto start = std::chrono::steady_clock::now();
    try {
      const ChatRequest request = fitb_request(q, catalog, cfg);
      const ChatResponse response = cfg.backend->chat(request);
      const ParsedAnswer parsed = parse_answer(Task::fitb, response.text);
      entry.predicted = parsed.choice_index;
      entry.confidence = parsed.confidence;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::backend && e.code() != ErrorCode::transport) throw;
      entry.error = e.what();
    }
    if (cfg.record_latency) {
      entry.latency_ms =
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    }
  });
  std::stable_sort(report.log.begin(), report.log.end(),
                   [](const QuestionLog& a, const QuestionLog& b) { return a.qid < b.qid; });
  recount(report);
  return report;
}

// ---------------------------------------------------------------------------
// Report files

inline nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json log = nlohmann::json::array();
  for (const auto& e : r.log) {
    nlohmann::json j = {{"qid", e.qid},
                        {"predicted", e.predicted ? nlohmann::json(*e.predicted) : nlohmann::json(nullptr)},
                        {"truth", e.truth},
                        {"parse_confidence", to_string(e.confidence)},
                        {"latency_ms", e.latency_ms}};
    if (!e.error.empty()) j["error"] = e.error;
    log.push_back(std::move(j));
  }
  nlohmann::json baselines = nlohmann::json::array();
  for (const auto& b : kPublishedFitb) {
    baselines.push_back({{"method", b.method}, {"disjoint", b.disjoint}, {"joint", b.joint}});
  }
  return {{"dataset", r.dataset_tag},
          {"n_questions", r.n_questions},
          {"n_correct", r.n_correct},
          {"n_parse_failed", r.n_parse_failed},
          {"n_backend_errors", r.n_backend_errors},
          {"accuracy", r.accuracy},
          {"retrieval", r.retrieval},
          {"incomplete", r.incomplete},
          {"config", r.config},
          {"config_fingerprint", r.config_fingerprint},
          {"published_baselines", std::move(baselines)},
          {"log", std::move(log)}};
}

inline EvalReport report_from_json(const nlohmann::json& j) {
  EvalReport r;
  r.dataset_tag = j.at("dataset").get<std::string>();
  r.n_questions = j.at("n_questions").get<std::size_t>();
  r.n_correct = j.at("n_correct").get<std::size_t>();
  r.n_parse_failed = j.at("n_parse_failed").get<std::size_t>();
  r.n_backend_errors = j.value("n_backend_errors", std::size_t{0});
  r.accuracy = j.at("accuracy").get<double>();
  r.retrieval = j.value("retrieval", false);
  r.incomplete = j.value("incomplete", false);
  r.config = j.value("config", std::map<std::string, std::string>{});
  r.config_fingerprint = j.value("config_fingerprint", "");
  for (const auto& e : j.at("log")) {
    QuestionLog entry;
    entry.qid = e.at("qid").get<std::string>();
    if (!e.at("predicted").is_null()) entry.predicted = e["predicted"].get<int>();
    entry.truth = e.at("truth").get<int>();
    entry.confidence = parse_confidence(e.at("parse_confidence").get<std::string>());
    entry.latency_ms = e.value("latency_ms", 0.0);
    entry.error = e.value("error", "");
    r.log.push_back(std::move(entry));
  }
  return r;
}

namespace detail {

inline std::string csv_field(const std::string& value) {
  if (value.find_first_of(",\"\n\r") == std::string::npos) return value;
  std::string out = "\"";
  for (char c : value) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

/// RFC 4180 rows, quoted fields may span lines.
inline std::vector<std::vector<std::string>> parse_csv(std::string_view body) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  bool any = false;
  for (std::size_t i = 0; i < body.size(); ++i) {
    const char c = body[i];
    if (quoted) {
      if (c == '"' && i + 1 < body.size() && body[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field += c;
      }
      continue;
    }
    if (c == '"') {
      quoted = true;
      any = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
      any = true;
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && i + 1 < body.size() && body[i + 1] == '\n') ++i;
      if (any || !field.empty()) {
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
      }
      row.clear();
      field.clear();
      any = false;
    } else {
      field += c;
      any = true;
    }
  }
  if (quoted) throw Error(ErrorCode::parse, "unterminated quoted CSV field");
  if (any || !field.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

enum class ReportFormat { json, csv };

inline ReportFormat parse_report_format(std::string_view name) {
  if (name == "json") return ReportFormat::json;
  if (name == "csv") return ReportFormat::csv;
  throw Error(ErrorCode::invalid_argument, "unknown report format '" + std::string(name) + "'");
}

inline constexpr std::string_view kReportCsvHeader = "qid,predicted,truth,parse_confidence,latency_ms,error";

/// JSON is lossless; CSV carries the per-question log only.
inline void export_report(const EvalReport& report, const std::filesystem::path& path, ReportFormat format) {
  std::string body;
  if (format == ReportFormat::json) {
    body = to_json(report).dump(2) + "\n";
  } else {
    body = std::string(kReportCsvHeader) + "\n";
    for (const auto& e : report.log) {
      body += detail::csv_field(e.qid) + "," + (e.predicted ? std::to_string(*e.predicted) : std::string()) + "," +
              std::to_string(e.truth) + "," + to_string(e.confidence) + "," + detail::format_double(e.latency_ms) +
              "," + detail::csv_field(e.error) + "\n";
    }
  }
  detail::write_file(path, body);
}

inline EvalReport load_report(const std::filesystem::path& path, ReportFormat format) {
  const std::string body = detail::read_file(path);
  if (format == ReportFormat::json) {
    try {
      return report_from_json(nlohmann::json::parse(body));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::parse, path.string() + ": " + e.what());
    }
  }
  const auto rows = detail::parse_csv(body);
  if (rows.empty() || text::join(rows.front(), ",") != kReportCsvHeader) {
    throw Error(ErrorCode::parse, path.string() + ": missing report CSV header");
  }
  EvalReport report;
  report.dataset_tag.clear();
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& row = rows[i];
    if (row.size() != 6) {
      throw Error(ErrorCode::parse, path.string() + ": row " + std::to_string(i) + " has " +
                                        std::to_string(row.size()) + " fields");
    }
    QuestionLog e;
    e.qid = row[0];
    try {
      if (!row[1].empty()) e.predicted = std::stoi(row[1]);
      e.truth = std::stoi(row[2]);
      e.latency_ms = std::stod(row[4]);
    } catch (const std::exception&) {
      throw Error(ErrorCode::parse, path.string() + ": row " + std::to_string(i) + " has a bad number");
    }
    e.confidence = parse_confidence(row[3]);
    e.error = row[5];
    report.log.push_back(std::move(e));
  }
  recount(report);
  return report;
}

// ---------------------------------------------------------------------------
// Ratio sweep

inline const std::vector<double>& default_ratio_grid() {
  static const std::vector<double> grid = {0.01, 0.05, 0.1, 0.25, 0.5, 1.0};
  return grid;
}

inline void validate_ratios(const std::vector<double>& ratios) {
  if (ratios.empty()) throw Error(ErrorCode::invalid_argument, "ratio grid is empty");
  for (std::size_t i = 0; i < ratios.size(); ++i) {
    if (!(ratios[i] > 0.0 && ratios[i] <= 1.0)) {
      throw Error(ErrorCode::invalid_argument, "ratio " + detail::format_double(ratios[i]) + " is outside (0, 1]");
    }
    if (i > 0 && !(ratios[i] > ratios[i - 1])) {
      throw Error(ErrorCode::invalid_argument, "ratios must be strictly increasing");
    }
  }
}

/// floor(ratio * total), with a 1e-9 allowance so 0.29 * 100 counts as 29.
inline std::size_t subsample_size(double ratio, std::size_t total) {
  return static_cast<std::size_t>(std::floor(ratio * static_cast<double>(total) + 1e-9));
}

/// Indices of the records kept at `ratio`, ascending. One seeded permutation
/// serves every ratio, so smaller subsamples nest inside larger ones.
inline std::vector<std::size_t> subsample_indices(std::size_t total, double ratio, std::uint64_t seed) {
  std::vector<std::size_t> order(total);
  for (std::size_t i = 0; i < total; ++i) order[i] = i;
  Rng rng(derive_seed(seed, "ratio-subsample"));
  rng.shuffle(order);
  order.resize(subsample_size(ratio, total));
  std::sort(order.begin(), order.end());
  return order;
}

/// Boundary to optional external fine-tuning. Receives the subsampled JSONL
/// and returns the base URL of the resulting model, or nothing to keep using
/// the configured backend.
class TrainerHook {
 public:
  virtual ~TrainerHook() = default;
  virtual std::optional<std::string> train(const std::filesystem::path& records_jsonl) = 0;
};

class NoopTrainerHook final : public TrainerHook {
 public:
  std::optional<std::string> train(const std::filesystem::path&) override { return std::nullopt; }
};

/// Runs `<command> '<jsonl path>'` through the shell; the last non-empty line
/// of stdout is the backend base URL. Non-zero exit is a failure.
class CommandTrainerHook final : public TrainerHook {
 public:
  explicit CommandTrainerHook(std::string command) : command_(std::move(command)) {}

  std::optional<std::string> train(const std::filesystem::path& records_jsonl) override {
    std::string quoted = "'";
    for (char c : records_jsonl.string()) quoted += c == '\'' ? std::string("'\\''") : std::string(1, c);
    quoted += "'";
    const std::string cmd = command_ + " " + quoted;
    FILE* pipe = ::popen(cmd.c_str(), "r");
    if (pipe == nullptr) throw Error(ErrorCode::io, "cannot start trainer hook: " + command_);
    std::string output;
    char buf[4096];
    while (std::size_t n = std::fread(buf, 1, sizeof buf, pipe)) output.append(buf, n);
    const int status = ::pclose(pipe);
    if (status != 0) {
      throw Error(ErrorCode::backend, "trainer hook exited with status " + std::to_string(status));
    }
    std::string url;
    for (const auto& line : text::split_lines(output)) {
      if (!text::trim(line).empty()) url = std::string(text::trim(line));
    }
    if (url.empty()) return std::nullopt;
    return url;
  }

 private:
  std::string command_;
};

struct RatioPoint {
  double ratio = 1.0;
  std::size_t n_train_records = 0;
  double accuracy = 0.0;
  std::uint64_t seed = 0;
  bool failed = false;
  std::string error;
  /// Backend used for this point when the hook supplied one.
  std::optional<std::string> backend_url;
  EvalReport report;
};

using BackendFactory = std::function<std::shared_ptr<ChatBackend>(const std::string& base_url)>;

struct RatioSeriesOptions {
  std::filesystem::path work_dir = "ratio_runs";
  /// Builds a backend for a URL returned by the trainer hook.
  BackendFactory backend_factory;
};

inline std::vector<RatioPoint> run_ratio_series(const std::vector<double>& ratios,
                                                const std::vector<TrainingRecord>& records, std::uint64_t seed,
                                                const std::vector<FITBQuestion>& questions, const Catalog& catalog,
                                                const PipelineConfig& pipeline, TrainerHook& hook,
                                                const RatioSeriesOptions& options = {}) {
  validate_ratios(ratios);
  std::vector<RatioPoint> points;
  for (double ratio : ratios) {
    RatioPoint point;
    point.ratio = ratio;
    point.seed = seed;
    const auto picks = subsample_indices(records.size(), ratio, seed);
    point.n_train_records = picks.size();
    std::vector<TrainingRecord> subset;
    subset.reserve(picks.size());
    for (std::size_t i : picks) subset.push_back(records[i]);
    const auto path = options.work_dir / ("train_ratio_" + detail::format_double(ratio) + ".jsonl");
    try {
      export_finetune_jsonl(subset, path);
      PipelineConfig cfg = pipeline;
      if (auto url = hook.train(path)) {
        if (!options.backend_factory) throw Error(ErrorCode::invalid_argument, "no backend factory for " + *url);
        point.backend_url = url;
        cfg.backend = options.backend_factory(*url);
      }
      point.report = run_fitb_eval(questions, catalog, cfg);
      point.accuracy = point.report.accuracy;
    } catch (const Error& e) {
      point.failed = true;
      point.error = e.what();
    }
    points.push_back(std::move(point));
  }
  return points;
}

/// Columns: ratio, n_train, accuracy, seed. Failed points leave accuracy empty.
inline void export_curve_csv(const std::vector<RatioPoint>& points, const std::filesystem::path& path) {
  std::string body = "ratio,n_train,accuracy,seed\n";
  for (const auto& p : points) {
    body += detail::format_double(p.ratio) + "," + std::to_string(p.n_train_records) + "," +
            (p.failed ? std::string() : detail::format_double(p.accuracy)) + "," + std::to_string(p.seed) + "\n";
  }
  detail::write_file(path, body);
}

}  // namespace fllm
