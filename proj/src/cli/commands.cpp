#include <algorithm>
#include <iostream>
#include <map>
#include <unordered_map>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "embsim/cli.hpp"
#include "embsim/error.hpp"
#include "embsim/log.hpp"
#include "embsim/parallel.hpp"
#include "embsim/retrieval.hpp"
#include "embsim/store.hpp"
#include "commands.hpp"

namespace embsim::cli {
namespace {

std::string join(std::span<const std::string> items, char sep) {
  std::string out;
  for (const auto& s : items) {
    if (!out.empty()) out += sep;
    out += s;
  }
  return out;
}

std::string report_stem(Measure measure, const std::string& dataset, const PairwiseMatrix& m) {
  std::string stem = std::string(to_string(measure)) + "_" + dataset;
  if (m.k) stem += "_k" + std::to_string(*m.k);
  return stem;
}

std::string chunking_echo(const Store& store, std::span<const std::string> datasets, bool size) {
  std::string value;
  for (const auto& ds : datasets) {
    std::string current;
    for (const auto& c : store.corpora())
      if (c.dataset_id == ds) current = size ? std::to_string(c.chunking.chunk_size) : c.chunking.tokenizer_id;
    if (current.empty()) current = "unknown";
    if (value.empty()) value = current;
    else if (value != current) return "mixed";
  }
  return value;
}

}  // namespace

Context::Context(GlobalOptions globals) : globals_(std::move(globals)) {
  if (!globals_.config.empty()) config_ = load_run_config(globals_.config);
}

const RunConfig& Context::config() const {
  if (!config_) throw DataError("this command needs --config");
  return *config_;
}

std::filesystem::path Context::store_root() const {
  if (!globals_.store.empty()) return globals_.store;
  if (config_ && config_->store) return *config_->store;
  return "store";
}

CompareParams Context::params(const CompareOverrides& o) const {
  CompareParams p = config_ ? config_->measure : CompareParams{};
  if (o.k) p.k = *o.k;
  if (o.num_queries) p.num_queries = *o.num_queries;
  if (o.selection) p.selection = parse_query_selection(*o.selection);
  if (globals_.seed) p.seed = *globals_.seed;
  p.threads = globals_.threads;
  if (p.k < 1) throw DataError("--k must be >= 1");
  if (p.num_queries < 1) throw DataError("--queries must be >= 1");
  return p;
}

std::vector<std::string> Context::dataset_ids(const std::optional<std::string>& only) const {
  if (only) return {*only};
  if (config_) {
    std::vector<std::string> ids;
    for (const auto& d : config_->datasets) ids.push_back(d.id);
    return ids;
  }
  return Store(store_root()).datasets();
}

std::vector<std::string> Context::model_ids(const std::vector<std::string>& only, const Store& store,
                                            const std::string& dataset) const {
  if (!only.empty()) return only;
  if (config_ && !config_->models.empty()) {
    std::vector<std::string> ids;
    for (const auto& m : config_->models) ids.push_back(m.provider_id);
    return ids;
  }
  return store.models(dataset, EmbeddingKind::chunks);
}

void Context::write_output(const std::filesystem::path& path, const std::function<void(const std::filesystem::path&)>& emit,
                           std::ostream& out) const {
  emit(path);
  log().info("event=wrote path={}", path.string());
  out << path.string() << '\n';
}

std::unique_ptr<FileLock> Context::lock_store() const {
  const auto root = store_root();
  std::filesystem::create_directories(root);
  return std::make_unique<FileLock>(root / "store.lock", false);
}

void cmd_ingest(const Context& ctx, const std::optional<std::string>& dataset) {
  const RunConfig& cfg = ctx.config();
  const auto lock = ctx.lock_store();
  Store store(ctx.store_root());
  for (const auto& id : ctx.dataset_ids(dataset)) {
    const DatasetConfig& d = cfg.dataset(id);
    log().info("event=ingest dataset={} corpus={}", id, d.corpus.string());
    const auto docs = parse_corpus(d.corpus);
    QuerySet queries = parse_queries(d.queries, id);
    if (d.expected_documents && *d.expected_documents != docs.size())
      log().warn("event=document_count dataset={} expected={} found={}", id, *d.expected_documents, docs.size());
    if (d.expected_queries && *d.expected_queries != queries.queries.size())
      log().warn("event=query_count dataset={} expected={} found={}", id, *d.expected_queries, queries.queries.size());
    const ChunkedCorpus corpus = chunk_corpus(id, docs, cfg.chunking, ctx.globals().threads);
    store.put_corpus(corpus, queries);
    log().info("event=ingested dataset={} documents={} chunks={} queries={}", id, docs.size(), corpus.chunks.size(),
               queries.queries.size());
  }
}

void cmd_embed(const Context& ctx, const std::optional<std::string>& dataset, const std::vector<std::string>& models,
               bool overwrite) {
  const RunConfig& cfg = ctx.config();
  const auto lock = ctx.lock_store();
  Store store(ctx.store_root());
  for (const auto& ds : ctx.dataset_ids(dataset)) {
    if (!store.has_corpus(ds)) throw NotFoundError("dataset '" + ds + "' has not been ingested into the store");
    const ChunkedCorpus corpus = store.get_corpus(ds);
    const QuerySet queries = store.get_queries(ds);
    for (const auto& id : ctx.model_ids(models, store, ds)) {
      const Embedder embedder(cfg.model(id));
      for (const EmbeddingKind kind : {EmbeddingKind::chunks, EmbeddingKind::queries}) {
        const StoreAddress address{ds, id, kind};
        if (store.contains(address) && !overwrite) {
          log().info("event=embed_skip address={} reason=present", to_string(address));
          continue;
        }
        EmbedOptions opts;
        opts.model_id = id;
        opts.checkpoint = store.checkpoint_path(address);
        log().info("event=embed_start address={}", to_string(address));
        const EmbeddingMatrix m = kind == EmbeddingKind::chunks ? embed_corpus(corpus, embedder, opts)
                                                                : embed_queries(queries, corpus.config, embedder, opts);
        store.put(m, overwrite);
        log().info("event=embed_done address={} rows={} dim={}", to_string(address), m.rows(), m.dim);
      }
    }
  }
}

void cmd_import(const Context& ctx, const std::filesystem::path& file, bool overwrite) {
  const auto lock = ctx.lock_store();
  Store store(ctx.store_root());
  const EmbeddingMatrix m = import_embeddings(file);
  const StoreAddress address = store.put(m, overwrite);
  log().info("event=imported address={} rows={} dim={}", to_string(address), m.rows(), m.dim);
}

void cmd_export(const Context& ctx, const std::string& dataset, const std::string& model, EmbeddingKind kind,
                const std::filesystem::path& file, std::ostream& out) {
  const Store store(ctx.store_root());
  const EmbeddingMatrix m = store.get(dataset, model, kind);
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  ctx.write_output(file, [&](const std::filesystem::path& p) { export_embeddings(m, p); }, out);
}

void cmd_compare(const Context& ctx, Measure measure, const CompareRequest& request, std::ostream& out) {
  const Store store(ctx.store_root());
  const CompareParams params = ctx.params(request.overrides);
  const std::vector<std::string> datasets = ctx.dataset_ids(request.mean ? std::nullopt : request.dataset);
  if (datasets.empty()) throw DataError("compare: no datasets");
  if (!request.mean && !request.dataset && datasets.size() != 1)
    throw DataError("compare: choose --dataset or --mean (" + std::to_string(datasets.size()) + " datasets available)");

  std::vector<PairwiseMatrix> matrices;
  for (const auto& ds : datasets) {
    const auto models = ctx.model_ids(request.models, store, ds);
    log().info("event=compare measure={} dataset={} models={}", to_string(measure), ds, models.size());
    matrices.push_back(pairwise_matrix(measure, models, ds, store, params));
  }
  const PairwiseMatrix result = request.mean ? mean_matrices(matrices) : std::move(matrices.front());
  const std::string scope = request.mean ? "mean" : datasets.front();

  Linkage linkage = ctx.has_config() ? ctx.config().linkage : Linkage::average;
  if (request.linkage) linkage = parse_linkage(*request.linkage);

  Provenance provenance{{"datasets", join(datasets, ';')},
                        {"chunk_size", chunking_echo(store, datasets, true)},
                        {"tokenizer_id", chunking_echo(store, datasets, false)}};
  if (measure != Measure::cka) {
    provenance.emplace_back("query_selection", std::string(to_string(params.selection)));
    provenance.emplace_back("seed", std::to_string(params.seed));
  }
  std::optional<Dendrogram> dendrogram;
  if (request.cluster) {
    dendrogram = hierarchical_cluster(result, linkage);
    provenance.emplace_back("linkage", std::string(to_string(linkage)));
  }

  const auto dir = ctx.out_dir();
  std::filesystem::create_directories(dir);
  const std::string stem = report_stem(measure, scope, result);
  ctx.write_output(dir / (stem + ".csv"), [&](const auto& p) { emit_csv(result, p, provenance); }, out);
  ctx.write_output(dir / (stem + ".svg"),
                   [&](const auto& p) { emit_heatmap_svg(result, dendrogram ? &*dendrogram : nullptr, p); }, out);
  if (dendrogram)
    ctx.write_output(dir / (stem + "_dendrogram.json"), [&](const auto& p) { emit_dendrogram_json(*dendrogram, p); },
                     out);
}

void cmd_sweep(const Context& ctx, const SweepRequest& request, std::ostream& out) {
  const Store store(ctx.store_root());
  const CompareParams params = ctx.params(request.overrides);
  const std::string& ds = request.dataset;
  std::vector<EmbeddingMatrix> loaded;
  loaded.reserve(4);
  for (const auto* model : {&request.model_a, &request.model_b}) {
    loaded.push_back(store.get(ds, *model, EmbeddingKind::chunks));
    loaded.push_back(store.get(ds, *model, EmbeddingKind::queries));
  }
  const std::vector<ModelEmbeddings> models{{&loaded[0], &loaded[1]}, {&loaded[2], &loaded[3]}};
  const std::vector<std::string> ids = shared_query_ids(models, params);

  std::vector<KSweepCurve> curves(ids.size());
  const RetrievalIndex index_a(loaded[0]);
  const RetrievalIndex index_b(loaded[2]);
  auto row_lookup = [](const EmbeddingMatrix& q) {
    std::unordered_map<std::string, std::size_t> rows;
    for (std::size_t i = 0; i < q.rows(); ++i) rows.emplace(q.keys[i].doc_id, i);
    return rows;
  };
  const auto rows_a = row_lookup(loaded[1]);
  const auto rows_b = row_lookup(loaded[3]);
  parallel_for(ids.size(), params.threads, [&](std::size_t i) {
    const auto& qid = ids[i];
    const RetrievalResult a = index_a.full_ranking(loaded[1].row(rows_a.at(qid)), qid);
    const RetrievalResult b = index_b.full_ranking(loaded[3].row(rows_b.at(qid)), qid);
    KSweepCurve curve = sweep_k(a, b);
    curve.model_a = request.model_a;
    curve.model_b = request.model_b;
    curves[i] = std::move(curve);
  });

  const auto dir = ctx.out_dir();
  std::filesystem::create_directories(dir);
  const std::string name = "sweep_" + ds + "_" + request.model_a + "_" + request.model_b + ".csv";
  ctx.write_output(dir / name, [&](const auto& p) { emit_sweep_csv(curves, p); }, out);
}

}  // namespace embsim::cli

namespace embsim {

int run_cli(const std::vector<std::string>& args) {
  using namespace cli;
  CLI::App app{"Embedding model similarity toolkit", "embsim"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "embsim 1.0.0");
  GlobalOptions globals;
  std::string log_level = "info";
  app.add_option("--config", globals.config, "Run configuration (JSON)");
  app.add_option("--store", globals.store, "Store root directory (overrides the config)");
  app.add_option("--out-dir", globals.out_dir, "Directory for reports and exports")->capture_default_str();
  app.add_option("--threads", globals.threads, "Worker threads, 0 = all cores")->capture_default_str();
  app.add_option("--seed", globals.seed, "Seed for query sampling and the mock demo");
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off")->capture_default_str();

  std::optional<std::string> dataset;
  std::vector<std::string> models;
  bool overwrite = false;

  auto* ingest = app.add_subcommand("ingest", "Parse and chunk BEIR corpora into the store");
  ingest->add_option("--dataset", dataset, "Only this dataset");

  auto* embed = app.add_subcommand("embed", "Embed chunks and queries (resumable)");
  embed->add_option("--dataset", dataset, "Only this dataset");
  embed->add_option("--models", models, "Only these models")->delimiter(',');
  embed->add_flag("--overwrite", overwrite, "Re-embed entries that already exist");

  std::filesystem::path file;
  auto* import = app.add_subcommand("import", "Add an ESF1 file to the store");
  import->add_option("file", file, "ESF1 file")->required();
  import->add_flag("--overwrite", overwrite, "Replace an existing entry");

  std::string export_dataset;
  std::string export_model;
  std::string export_kind = "chunks";
  auto* exp = app.add_subcommand("export", "Write one store entry as ESF1");
  exp->add_option("--dataset", export_dataset)->required();
  exp->add_option("--model", export_model)->required();
  exp->add_option("--kind", export_kind)->check(CLI::IsMember({"chunks", "queries"}))->capture_default_str();
  exp->add_option("file", file, "Output file")->required();

  std::string measure_name;
  CompareRequest compare_request;
  bool no_cluster = false;
  std::optional<std::size_t> k;
  std::optional<std::size_t> num_queries;
  std::optional<std::string> selection;
  auto* compare = app.add_subcommand("compare", "Pairwise similarity matrix with heatmap and clustering");
  compare->add_option("measure", measure_name, "cka, jaccard or rank")
      ->required()
      ->check(CLI::IsMember({"cka", "jaccard", "rank"}));
  auto* compare_dataset = compare->add_option("--dataset", compare_request.dataset, "Dataset to compare on");
  compare->add_flag("--mean", compare_request.mean, "Average the matrices over all datasets")->excludes(compare_dataset);
  compare->add_option("--models", compare_request.models, "Models to include")->delimiter(',');
  compare->add_option("--k", k, "Top-k cutoff for retrieval measures");
  compare->add_option("--queries", num_queries, "Number of queries to average over");
  compare->add_option("--selection", selection, "first or random")->check(CLI::IsMember({"first", "random"}));
  compare->add_option("--linkage", compare_request.linkage, "average, single or complete")
      ->check(CLI::IsMember({"average", "single", "complete"}));
  compare->add_flag("--no-cluster", no_cluster, "Skip hierarchical clustering");

  SweepRequest sweep_request;
  auto* sweep = app.add_subcommand("sweep", "Retrieval similarity for every k on one model pair");
  sweep->add_option("--dataset", sweep_request.dataset)->required();
  sweep->add_option("--model-a", sweep_request.model_a)->required();
  sweep->add_option("--model-b", sweep_request.model_b)->required();
  sweep->add_option("--queries", num_queries, "Number of queries");
  sweep->add_option("--selection", selection, "first or random")->check(CLI::IsMember({"first", "random"}));

  MockDemoOptions demo;
  auto* mock = app.add_subcommand("mock-demo", "Synthetic end-to-end run on mock providers");
  mock->add_option("--n-chunks", demo.n_chunks)->capture_default_str();
  mock->add_option("--n-models", demo.n_models)->capture_default_str();
  mock->add_option("--dim", demo.dim)->capture_default_str();
  mock->add_option("--n-queries", demo.n_queries)->capture_default_str();
  mock->add_option("--n-datasets", demo.n_datasets)->capture_default_str();

  auto* rebuild = app.add_subcommand("rebuild-manifest", "Rescan the store and rewrite its manifest");

  std::vector<std::string> argv(args.rbegin(), args.rend());
  try {
    app.parse(argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }
  log().set_level(spdlog::level::from_str(log_level));

  try {
    const Context ctx(globals);
    std::ostream& out = std::cout;
    if (*ingest) {
      cmd_ingest(ctx, dataset);
    } else if (*embed) {
      cmd_embed(ctx, dataset, models, overwrite);
    } else if (*import) {
      cmd_import(ctx, file, overwrite);
    } else if (*exp) {
      cmd_export(ctx, export_dataset, export_model, parse_kind(export_kind), file, out);
    } else if (*compare) {
      compare_request.overrides = {k, num_queries, selection};
      compare_request.cluster = !no_cluster;
      cmd_compare(ctx, parse_measure(measure_name), compare_request, out);
    } else if (*sweep) {
      sweep_request.overrides = {std::nullopt, num_queries, selection};
      cmd_sweep(ctx, sweep_request, out);
    } else if (*mock) {
      demo.seed = globals.seed.value_or(0);
      demo.threads = globals.threads;
      demo.out_dir = globals.out_dir;
      run_mock_demo(demo);
    } else if (*rebuild) {
      const auto lock = ctx.lock_store();
      Store(ctx.store_root()).rebuild_manifest();
    }
  } catch (const ProviderError& e) {
    log().error("event=failed kind=provider error=\"{}\"", e.what());
    return kExitProvider;
  } catch (const Error& e) {
    log().error("event=failed kind=data error=\"{}\"", e.what());
    return kExitData;
  } catch (const std::exception& e) {
    log().error("event=failed kind=io error=\"{}\"", e.what());
    return kExitData;
  }
  return kExitOk;
}

}  // namespace embsim
