// Command-line front end: catalog maintenance, data generation, index build,
// retrieval inspection, evaluation and the HTTP service.

#include <csignal>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fllm/fllm.hpp"

namespace {

using fllm::Config;
using fllm::ConfigValues;
using nlohmann::json;

/// Config sources shared by every subcommand.
struct ConfigArgs {
  std::string config_path;
  std::vector<std::string> sets;
  ConfigValues shortcuts;

  void attach(CLI::App* app) {
    app->add_option("--config", config_path, "key = value configuration file");
    app->add_option("--set", sets, "override a configuration key (key=value), repeatable");
  }

  /// Shortcut flags map onto config keys; --set wins over shortcuts.
  void shortcut(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
    app->add_option_function<std::string>(
        flag, [this, key](const std::string& v) { shortcuts[key] = v; }, help);
  }

  [[nodiscard]] Config resolve() const {
    ConfigValues overrides = shortcuts;
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw fllm::Error(fllm::ErrorCode::validation, "--set expects key=value, got " + s);
      overrides[std::string(fllm::text::trim(s.substr(0, eq)))] = std::string(fllm::text::trim(s.substr(eq + 1)));
    }
    std::optional<std::filesystem::path> path;
    if (!config_path.empty()) path = config_path;
    return fllm::load_config(path, fllm::process_env, overrides);
  }
};

void print_json(const json& j) { std::cout << j.dump(2) << "\n"; }

json counts_json(const fllm::Catalog& catalog) {
  const auto c = fllm::count(catalog);
  json per_split = json::object();
  for (auto s : fllm::kAllSplits) per_split[fllm::to_string(s)] = c.per_split.at(s);
  return {{"items", c.items}, {"outfits", c.outfits}, {"per_split", per_split}};
}

json report_json(const fllm::DisjointnessReport& r) {
  return {{"mode", fllm::to_string(r.mode)},
          {"disjoint", r.disjoint()},
          {"informational", r.informational},
          {"violations", r.violations},
          {"unknown_outfits", r.unknown_outfits}};
}

std::vector<double> parse_ratio_list(const std::string& text) {
  std::vector<double> out;
  for (const auto& part : fllm::text::split(text, ',')) {
    const std::string t(fllm::text::trim(part));
    std::size_t pos = 0;
    double v = 0;
    try {
      v = std::stod(t, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (t.empty() || pos != t.size()) throw fllm::Error(fllm::ErrorCode::invalid_argument, "bad number '" + t + "'");
    out.push_back(v);
  }
  return out;
}

std::vector<fllm::KnowledgeDoc> configured_knowledge(const Config& config) {
  if (!config.knowledge_path) return {};
  return fllm::load_knowledge_jsonl(*config.knowledge_path);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fashion recommendation engine: data generation, retrieval, evaluation and serving"};
  app.require_subcommand(1);

  // ---- catalog -------------------------------------------------------------
  auto* catalog_cmd = app.add_subcommand("catalog", "inspect and split a catalog");
  catalog_cmd->require_subcommand(1);

  ConfigArgs validate_args;
  auto* validate_cmd = catalog_cmd->add_subcommand("validate", "load, validate and count a catalog");
  validate_args.attach(validate_cmd);
  validate_args.shortcut(validate_cmd, "--root", "catalog.root", "dataset root");
  validate_args.shortcut(validate_cmd, "--layout", "catalog.layout", "flat | nondisjoint | disjoint");
  validate_cmd->callback([&] {
    const Config config = validate_args.resolve();
    const auto catalog = fllm::load_catalog(config.catalog_root, config.layout());
    json out = counts_json(catalog);
    out["disjointness"] = report_json(fllm::verify_disjoint(catalog, catalog.splits));
    print_json(out);
  });

  ConfigArgs split_args;
  std::string split_ratios = "0.8,0.1,0.1";
  std::uint64_t split_seed = 0;
  std::string split_out;
  auto* split_cmd = catalog_cmd->add_subcommand("split", "build item-disjoint splits and write a flat catalog");
  split_args.attach(split_cmd);
  split_args.shortcut(split_cmd, "--root", "catalog.root", "dataset root");
  split_args.shortcut(split_cmd, "--layout", "catalog.layout", "flat | nondisjoint | disjoint");
  split_cmd->add_option("--ratios", split_ratios, "train,valid,test fractions")->capture_default_str();
  split_cmd->add_option("--seed", split_seed, "shuffle seed")->capture_default_str();
  split_cmd->add_option("--out", split_out, "output directory")->required();
  split_cmd->callback([&] {
    const Config config = split_args.resolve();
    auto catalog = fllm::load_catalog(config.catalog_root, config.layout());
    const auto r = parse_ratio_list(split_ratios);
    if (r.size() != 3) throw fllm::Error(fllm::ErrorCode::invalid_argument, "--ratios needs three values");
    catalog.splits = fllm::build_disjoint_splits(catalog, {r[0], r[1], r[2]}, split_seed);
    // Official questions refer to the old splits.
    catalog.official_fitb.clear();
    fllm::save_catalog(catalog, split_out, fllm::CatalogLayout::flat(fllm::SplitMode::disjoint));
    json out = counts_json(catalog);
    out["dropped"] = catalog.splits.dropped.size();
    out["disjointness"] = report_json(fllm::verify_disjoint(catalog, catalog.splits));
    print_json(out);
  });

  // ---- qagen ---------------------------------------------------------------
  auto* qagen_cmd = app.add_subcommand("qagen", "generate training and evaluation data");
  qagen_cmd->require_subcommand(1);
  struct QagenArgs {
    ConfigArgs cfg;
    std::string split = "train";
    std::uint64_t seed = 0;
    std::string out;
  };
  auto add_qagen = [&](const std::string& name, const std::string& help, QagenArgs& a) {
    auto* cmd = qagen_cmd->add_subcommand(name, help);
    a.cfg.attach(cmd);
    a.cfg.shortcut(cmd, "--root", "catalog.root", "dataset root");
    a.cfg.shortcut(cmd, "--layout", "catalog.layout", "flat | nondisjoint | disjoint");
    cmd->add_option("--split", a.split, "train | valid | test")->capture_default_str();
    cmd->add_option("--seed", a.seed, "generation seed")->capture_default_str();
    cmd->add_option("--out", a.out, "output JSONL")->required();
    return cmd;
  };

  QagenArgs binary_args;
  int negatives = 1;
  auto* binary_cmd = add_qagen("binary", "compatibility yes/no records", binary_args);
  binary_cmd->add_option("--negatives", negatives, "negatives per positive")->capture_default_str();
  binary_cmd->callback([&] {
    const Config config = binary_args.cfg.resolve();
    const auto catalog = fllm::load_catalog(config.catalog_root, config.layout());
    const auto split = fllm::parse_split(binary_args.split);
    const auto qas = fllm::gen_binary_qa(catalog, split, negatives, binary_args.seed, config.templates());
    std::vector<fllm::TrainingRecord> records;
    for (const auto& qa : qas) records.push_back(fllm::binary_training_record(qa, config.templates(), split));
    fllm::export_finetune_jsonl(records, binary_args.out);
    const auto positives = std::count_if(qas.begin(), qas.end(),
                                         [](const auto& q) { return q.label == fllm::CompatLabel::compatible; });
    print_json({{"records", records.size()},
                {"compatible", positives},
                {"incompatible", qas.size() - static_cast<std::size_t>(positives)}});
  });

  QagenArgs fitb_args;
  bool generated_only = false;
  std::string fitb_records;
  auto* fitb_cmd = add_qagen("fitb", "fill-in-the-blank questions (question JSONL)", fitb_args);
  fitb_cmd->add_flag("--generated", generated_only, "ignore an official question file");
  fitb_cmd->add_option("--records", fitb_records, "also write fine-tuning records here");
  fitb_cmd->callback([&] {
    const Config config = fitb_args.cfg.resolve();
    const auto catalog = fllm::load_catalog(config.catalog_root, config.layout());
    const auto questions =
        fllm::gen_fitb_questions(catalog, fllm::parse_split(fitb_args.split), fitb_args.seed, !generated_only);
    fllm::export_fitb_jsonl(questions, fitb_args.out);
    if (!fitb_records.empty()) {
      std::vector<fllm::TrainingRecord> records;
      for (const auto& q : questions) records.push_back(fllm::fitb_training_record(catalog, q, config.templates()));
      fllm::export_finetune_jsonl(records, fitb_records);
    }
    const auto widened = std::count_if(questions.begin(), questions.end(), [](const auto& q) { return q.widened; });
    print_json({{"questions", questions.size()}, {"widened", widened}});
  });

  QagenArgs auto_args;
  std::string knowledge_out;
  fllm::AutoQaOptions auto_options;
  auto* auto_cmd = add_qagen("auto", "model-written QA records and knowledge documents", auto_args);
  auto_args.cfg.shortcut(auto_cmd, "--backend", "backend.kind", "scripted | oracle | random | http");
  auto_cmd->add_option("--knowledge", knowledge_out, "knowledge JSONL output")->required();
  auto_cmd->add_option("--per-outfit", auto_options.per_outfit, "QA pairs requested per outfit")->capture_default_str();
  auto_cmd->add_option("--max-outfits", auto_options.max_outfits, "sample at most this many outfits (0 = all)");
  auto_cmd->callback([&] {
    const Config config = auto_args.cfg.resolve();
    const auto catalog = fllm::load_catalog(config.catalog_root, config.layout());
    auto provider = fllm::make_provider(config);
    auto backend = fllm::make_backend(config, provider);
    auto_options.seed = auto_args.seed;
    auto_options.concurrency = config.concurrency;
    auto_options.model = config.backend_model;
    const auto result = fllm::gen_auto_qa(*backend, catalog, fllm::parse_split(auto_args.split),
                                          fllm::default_auto_qa_templates(), auto_options);
    fllm::export_finetune_jsonl(result.records, auto_args.out);
    fllm::export_knowledge_jsonl(result.docs, knowledge_out);
    print_json({{"records", result.records.size()},
                {"docs", result.docs.size()},
                {"prompts", result.prompts_issued},
                {"malformed", result.malformed},
                {"errors", result.errors},
                {"warnings", result.warnings}});
  });

  // ---- ingest / index ------------------------------------------------------
  ConfigArgs ingest_args;
  std::string ingest_out;
  auto* ingest_cmd = app.add_subcommand("ingest", "load a dataset and optionally rewrite it in the flat layout");
  ingest_args.attach(ingest_cmd);
  ingest_args.shortcut(ingest_cmd, "--root", "catalog.root", "dataset root");
  ingest_args.shortcut(ingest_cmd, "--layout", "catalog.layout", "flat | nondisjoint | disjoint");
  ingest_cmd->add_option("--out", ingest_out, "write a flat copy here");
  ingest_cmd->callback([&] {
    const Config config = ingest_args.resolve();
    const auto catalog = fllm::load_catalog(config.catalog_root, config.layout());
    if (!ingest_out.empty()) fllm::save_catalog(catalog, ingest_out, fllm::CatalogLayout::flat(catalog.splits.mode));
    print_json(counts_json(catalog));
  });

  auto* index_cmd = app.add_subcommand("index", "vector index lifecycle");
  index_cmd->require_subcommand(1);
  ConfigArgs build_args;
  auto* build_cmd = index_cmd->add_subcommand("build", "embed items and knowledge documents and persist the index");
  build_args.attach(build_cmd);
  build_args.shortcut(build_cmd, "--root", "catalog.root", "dataset root");
  build_args.shortcut(build_cmd, "--index", "index.path", "index file to write");
  build_args.shortcut(build_cmd, "--knowledge", "knowledge.path", "knowledge JSONL");
  build_cmd->callback([&] {
    const Config config = build_args.resolve();
    const auto catalog = fllm::load_catalog(config.catalog_root, config.layout());
    auto provider = fllm::make_provider(config);
    const auto index = fllm::build_index(catalog, configured_knowledge(config), *provider);
    index.persist(config.index_path);
    print_json({{"index", config.index_path.string()},
                {"documents", index.size()},
                {"dims", index.dims()},
                {"fingerprint", index.fingerprint()}});
  });

  // ---- retrieve ------------------------------------------------------------
  ConfigArgs retrieve_args;
  std::vector<std::string> retrieve_items;
  std::optional<std::string> retrieve_text, retrieve_style, retrieve_occasion;
  std::size_t retrieve_k = 10;
  bool retrieve_llm = false;
  auto* retrieve_cmd = app.add_subcommand("retrieve", "run multi-path retrieval and print the fused list as JSON");
  retrieve_args.attach(retrieve_cmd);
  retrieve_args.shortcut(retrieve_cmd, "--index", "index.path", "index file");
  retrieve_cmd->add_option("--item", retrieve_items, "query item id, repeatable");
  retrieve_cmd->add_option("--text", retrieve_text, "free-text query");
  retrieve_cmd->add_option("--style", retrieve_style, "style preference");
  retrieve_cmd->add_option("--occasion", retrieve_occasion, "occasion");
  retrieve_cmd->add_option("-k", retrieve_k, "results per path and after fusion")->capture_default_str();
  retrieve_cmd->add_flag("--llm", retrieve_llm, "add model-generated question paths");
  retrieve_cmd->callback([&] {
    const Config config = retrieve_args.resolve();
    auto state = fllm::open_service_state(config);
    fllm::QueryContext ctx;
    ctx.query_items = retrieve_items;
    ctx.free_text = retrieve_text;
    ctx.style = retrieve_style;
    ctx.occasion = retrieve_occasion;
    ctx.k_per_path = ctx.k_final = retrieve_k;
    const auto plan =
        fllm::plan_queries(ctx, state.catalog, retrieve_llm ? state.backend.get() : nullptr, config.n_questions);
    const auto results = fllm::execute(plan, *state.index, *state.provider, ctx.k_per_path);
    const auto fused = fllm::fuse(results.per_path_hits, ctx.k_final);
    json paths = json::array();
    for (std::size_t i = 0; i < plan.paths.size(); ++i) {
      json hits = json::array();
      for (const auto& h : results.per_path_hits[i].hits) hits.push_back({{"doc_id", h.doc_id}, {"score", h.score}});
      paths.push_back({{"label", plan.paths[i].label},
                       {"path_kind", fllm::to_string(plan.paths[i].kind)},
                       {"query_text", plan.paths[i].query_text},
                       {"hits", std::move(hits)}});
    }
    json fused_json = json::array();
    for (const auto& f : fused) {
      fused_json.push_back({{"doc_id", f.doc_id}, {"fused_score", f.fused_score}, {"paths", f.paths}});
    }
    auto warnings = plan.warnings;
    warnings.insert(warnings.end(), results.warnings.begin(), results.warnings.end());
    print_json({{"paths", std::move(paths)}, {"fused", std::move(fused_json)}, {"warnings", warnings}});
  });

  // ---- eval ----------------------------------------------------------------
  auto* eval_cmd = app.add_subcommand("eval", "fill-in-the-blank evaluation");
  eval_cmd->require_subcommand(1);
  struct EvalArgs {
    ConfigArgs cfg;
    std::string split = "test";
    std::string questions;
    std::uint64_t seed = 0;
    std::string retrieval = "off";
    std::size_t limit = 0;
  };
  auto add_eval_common = [&](CLI::App* cmd, EvalArgs& a) {
    a.cfg.attach(cmd);
    a.cfg.shortcut(cmd, "--root", "catalog.root", "dataset root");
    a.cfg.shortcut(cmd, "--backend", "backend.kind", "scripted | oracle | random | http");
    a.cfg.shortcut(cmd, "--index", "index.path", "index file (retrieval on)");
    cmd->add_option("--split", a.split, "split to generate questions for")->capture_default_str();
    cmd->add_option("--questions", a.questions, "question JSONL instead of generating");
    cmd->add_option("--seed", a.seed, "question generation seed")->capture_default_str();
    cmd->add_option("--retrieval", a.retrieval, "on | off")
        ->check(CLI::IsMember({"on", "off"}))
        ->capture_default_str();
    cmd->add_option("--limit", a.limit, "evaluate only the first N questions");
  };
  struct EvalSetup {
    Config config;
    fllm::Catalog catalog;
    std::vector<fllm::FITBQuestion> questions;
    fllm::PipelineConfig pipeline;
  };
  auto setup_eval = [](const EvalArgs& a) {
    EvalSetup s;
    s.config = a.cfg.resolve();
    s.catalog = fllm::load_catalog(s.config.catalog_root, s.config.layout());
    s.questions = a.questions.empty() ? fllm::gen_fitb_questions(s.catalog, fllm::parse_split(a.split), a.seed)
                                      : fllm::load_fitb_jsonl(a.questions);
    if (a.limit > 0 && a.limit < s.questions.size()) s.questions.resize(a.limit);
    auto provider = fllm::make_provider(s.config);
    s.pipeline.backend = fllm::make_backend(s.config, provider);
    s.pipeline.provider = provider;
    s.pipeline.retrieval = a.retrieval == "on";
    if (s.pipeline.retrieval) {
      s.pipeline.index = std::make_shared<fllm::VectorIndex>(fllm::VectorIndex::load(s.config.index_path));
    }
    s.pipeline.k_per_path = s.config.k_per_path;
    s.pipeline.k_final = s.config.k_final;
    s.pipeline.templates = s.config.templates();
    s.pipeline.model = s.config.backend_model;
    s.pipeline.concurrency = s.config.concurrency;
    s.pipeline.dataset_tag = fllm::to_string(s.catalog.splits.mode);
    s.pipeline.extra["question_seed"] = std::to_string(a.seed);
    if (s.config.backend_kind == "random") s.pipeline.extra["backend_seed"] = std::to_string(s.config.backend_seed);
    return s;
  };

  EvalArgs fitb_eval_args;
  std::string report_out, report_format = "json";
  auto* eval_fitb_cmd = eval_cmd->add_subcommand("fitb", "accuracy over a question set");
  add_eval_common(eval_fitb_cmd, fitb_eval_args);
  eval_fitb_cmd->add_option("--out", report_out, "report file");
  eval_fitb_cmd->add_option("--format", report_format, "json | csv")
      ->check(CLI::IsMember({"json", "csv"}))
      ->capture_default_str();
  eval_fitb_cmd->callback([&] {
    const EvalSetup s = setup_eval(fitb_eval_args);
    const auto report = fllm::run_fitb_eval(s.questions, s.catalog, s.pipeline);
    if (!report_out.empty()) fllm::export_report(report, report_out, fllm::parse_report_format(report_format));
    print_json({{"dataset", report.dataset_tag},
                {"retrieval", report.retrieval},
                {"n_questions", report.n_questions},
                {"n_correct", report.n_correct},
                {"n_parse_failed", report.n_parse_failed},
                {"n_backend_errors", report.n_backend_errors},
                {"accuracy", report.accuracy},
                {"incomplete", report.incomplete},
                {"config_fingerprint", report.config_fingerprint}});
  });

  EvalArgs ratio_args;
  std::string grid_text, records_path, hook_command, curve_out = "ratio_curve.csv", work_dir = "ratio_runs";
  std::uint64_t ratio_seed = 0;
  auto* eval_ratio_cmd = eval_cmd->add_subcommand("ratios", "few-shot training-data ratio sweep");
  add_eval_common(eval_ratio_cmd, ratio_args);
  eval_ratio_cmd->add_option("--grid", grid_text, "comma-separated ratios (default 0.01,0.05,0.1,0.25,0.5,1.0)");
  eval_ratio_cmd->add_option("--records", records_path, "training record JSONL")->required();
  eval_ratio_cmd->add_option("--ratio-seed", ratio_seed, "subsampling seed")->capture_default_str();
  eval_ratio_cmd->add_option("--hook", hook_command, "trainer command; receives the JSONL path, prints a base URL");
  eval_ratio_cmd->add_option("--work-dir", work_dir, "where subsampled JSONL files go")->capture_default_str();
  eval_ratio_cmd->add_option("--out", curve_out, "curve CSV")->capture_default_str();
  eval_ratio_cmd->callback([&] {
    const EvalSetup s = setup_eval(ratio_args);
    const auto grid = grid_text.empty() ? fllm::default_ratio_grid() : parse_ratio_list(grid_text);
    const auto records = fllm::load_finetune_jsonl(records_path);
    fllm::NoopTrainerHook noop;
    std::optional<fllm::CommandTrainerHook> command;
    if (!hook_command.empty()) command.emplace(hook_command);
    fllm::TrainerHook& hook = command ? static_cast<fllm::TrainerHook&>(*command) : noop;
    fllm::RatioSeriesOptions options;
    options.work_dir = work_dir;
    const Config config = s.config;
    options.backend_factory = [config](const std::string& url) { return fllm::make_http_backend(config, url); };
    const auto points =
        fllm::run_ratio_series(grid, records, ratio_seed, s.questions, s.catalog, s.pipeline, hook, options);
    fllm::export_curve_csv(points, curve_out);
    json out = json::array();
    for (const auto& p : points) {
      json j = {{"ratio", p.ratio}, {"n_train", p.n_train_records}, {"seed", p.seed}, {"failed", p.failed}};
      if (p.failed) j["error"] = p.error;
      else j["accuracy"] = p.accuracy;
      out.push_back(std::move(j));
    }
    print_json(out);
  });

  // ---- serve ---------------------------------------------------------------
  ConfigArgs serve_args;
  auto* serve_cmd = app.add_subcommand("serve", "serve /api over HTTP");
  serve_args.attach(serve_cmd);
  serve_args.shortcut(serve_cmd, "--port", "service.port", "listen port");
  serve_cmd->callback([&] {
    const Config config = serve_args.resolve();
    fllm::Service service(fllm::open_service_state(config));
    httplib::Server server;
    server.new_task_queue = [&config] { return new httplib::ThreadPool(std::max<std::size_t>(config.concurrency, 2)); };
    service.mount(server);
    std::cerr << "listening on http://" << config.host << ":" << config.port << " ("
              << service.state().index->size() << " documents, backend " << service.state().backend->kind() << ")\n";
    if (!server.listen(config.host, config.port)) {
      throw fllm::Error(fllm::ErrorCode::io, "cannot listen on " + config.host + ":" + std::to_string(config.port));
    }
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const fllm::Error& e) {
    std::cerr << "error [" << fllm::to_string(e.code()) << "]: " << e.what() << "\n";
    return e.code() == fllm::ErrorCode::validation ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
