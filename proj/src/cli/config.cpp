#include <set>

#include <json.hpp>

#include "embsim/cli.hpp"
#include "embsim/error.hpp"
#include "../io_util.hpp"

namespace embsim {
namespace {

using nlohmann::json;

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

template <typename T>
std::optional<T> optional_field(const json& obj, const char* name) {
  auto it = obj.find(name);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  return it->get<T>();
}

}  // namespace

const DatasetConfig& RunConfig::dataset(const std::string& id) const {
  for (const auto& d : datasets)
    if (d.id == id) return d;
  throw DataError("dataset '" + id + "' is not in the config");
}

const ProviderConfig& RunConfig::model(const std::string& id) const {
  for (const auto& m : models)
    if (m.provider_id == id) return m;
  throw DataError("model '" + id + "' is not in the config");
}

void RunConfig::validate() const {
  std::set<std::string> ids;
  for (const auto& d : datasets)
    if (!ids.insert(d.id).second) throw DataError("config: dataset id '" + d.id + "' is not unique");
  ids.clear();
  for (const auto& m : models) {
    m.validate();
    if (!ids.insert(m.provider_id).second) throw DataError("config: model id '" + m.provider_id + "' is not unique");
  }
  if (chunking.chunk_size < 1) throw DataError("config: chunk_size must be >= 1");
  find_tokenizer(chunking.tokenizer_id);
  if (measure.k < 1) throw DataError("config: k must be >= 1");
  if (measure.num_queries < 1) throw DataError("config: num_queries must be >= 1");
}

RunConfig parse_run_config(const std::string& text, const std::filesystem::path& base_dir) {
  RunConfig cfg;
  try {
    const json doc = json::parse(text);
    if (auto store = optional_field<std::string>(doc, "store")) cfg.store = resolve(base_dir, *store);
    if (auto it = doc.find("chunking"); it != doc.end()) {
      cfg.chunking.chunk_size = it->value("chunk_size", cfg.chunking.chunk_size);
      cfg.chunking.tokenizer_id = it->value("tokenizer", cfg.chunking.tokenizer_id);
    }
    if (auto it = doc.find("measure"); it != doc.end()) {
      cfg.measure.k = it->value("k", cfg.measure.k);
      cfg.measure.num_queries = it->value("num_queries", cfg.measure.num_queries);
      cfg.measure.selection = parse_query_selection(it->value("query_selection", std::string("first")));
      cfg.measure.seed = it->value("seed", cfg.measure.seed);
      cfg.linkage = parse_linkage(it->value("linkage", std::string("average")));
    }
    for (const auto& d : doc.value("datasets", json::array())) {
      cfg.datasets.push_back(DatasetConfig{d.at("id").get<std::string>(),
                                           resolve(base_dir, d.at("corpus").get<std::string>()),
                                           resolve(base_dir, d.at("queries").get<std::string>()),
                                           optional_field<std::size_t>(d, "expected_queries"),
                                           optional_field<std::size_t>(d, "expected_documents")});
    }
    for (const auto& m : doc.value("models", json::array())) {
      if (m.contains("api_key")) throw DataError("config: API keys must come from api_key_env, not the config file");
      ProviderConfig p;
      p.provider_id = m.at("id").get<std::string>();
      p.endpoint_url = m.at("endpoint").get<std::string>();
      p.model_name = m.value("model", p.provider_id);
      p.api_key_env = m.value("api_key_env", std::string());
      p.batch_size = m.value("batch_size", p.batch_size);
      p.max_retries = m.value("max_retries", p.max_retries);
      p.timeout_s = m.value("timeout_s", p.timeout_s);
      p.max_concurrency = m.value("max_concurrency", p.max_concurrency);
      p.backoff_base_s = m.value("backoff_base_s", p.backoff_base_s);
      p.expected_dim = optional_field<std::size_t>(m, "dim");
      p.max_tokens = optional_field<std::size_t>(m, "max_tokens");
      cfg.models.push_back(std::move(p));
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("invalid config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  RunConfig cfg = parse_run_config(detail::read_file(path), path.parent_path());
  cfg.source = path;
  return cfg;
}

}  // namespace embsim
