#include "embsim/store.hpp"

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>
#include <unordered_map>

#include <json.hpp>

#include "embsim/error.hpp"
#include "embsim/hash.hpp"
#include "embsim/log.hpp"
#include "io_util.hpp"

namespace embsim {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr const char* kManifestName = "manifest.json";
constexpr const char* kChunksName = "chunks.jsonl";
constexpr const char* kQueriesName = "queries.jsonl";

void check_id(const std::string& id, const char* what) {
  if (id.empty() || id == "." || id == ".." || id.find_first_of("/\\") != std::string::npos ||
      id.find('\0') != std::string::npos)
    throw DataError(std::string("invalid ") + what + " '" + id + "' (must be a non-empty name without slashes)");
}

std::uint64_t parse_hex(const std::string& text) {
  if (text.size() != 16) throw DataError("bad checksum '" + text + "' in manifest");
  return std::stoull(text, nullptr, 16);
}

}  // namespace

std::string to_string(const StoreAddress& address) {
  return address.dataset_id + "/" + address.model_id + "." + std::string(to_string(address.kind));
}

FileLock::FileLock(const fs::path& path, bool wait) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fd_ = ::open(path.c_str(), O_CREAT | O_RDWR | O_CLOEXEC, 0644);
  if (fd_ < 0) throw Error("cannot open lock file " + path.string() + ": " + std::strerror(errno));
  if (::flock(fd_, LOCK_EX | (wait ? 0 : LOCK_NB)) != 0) {
    const int err = errno;
    ::close(fd_);
    fd_ = -1;
    if (err == EWOULDBLOCK) throw StoreBusyError("another writer holds " + path.string());
    throw Error("cannot lock " + path.string() + ": " + std::strerror(err));
  }
}

FileLock::~FileLock() {
  if (fd_ >= 0) {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
}

Store::Store(fs::path root) : root_(std::move(root)) {}

fs::path Store::file_path(const StoreAddress& address) const {
  check_id(address.dataset_id, "dataset id");
  check_id(address.model_id, "model id");
  return root_ / address.dataset_id / (address.model_id + "." + std::string(to_string(address.kind)) + ".esf1");
}

fs::path Store::checkpoint_path(const StoreAddress& address) const {
  auto path = file_path(address);
  path.replace_extension(".ckpt");
  return path;
}

Store::Manifest Store::read_manifest() const {
  Manifest manifest;
  const fs::path path = root_ / kManifestName;
  if (!fs::exists(path)) return manifest;
  try {
    const json doc = json::parse(detail::read_file(path));
    for (const auto& e : doc.at("entries")) {
      manifest.entries.push_back(ManifestEntry{
          StoreAddress{e.at("dataset_id").get<std::string>(), e.at("model_id").get<std::string>(),
                       parse_kind(e.at("kind").get<std::string>())},
          e.at("file").get<std::string>(), parse_hex(e.at("checksum").get<std::string>()),
          e.at("n").get<std::size_t>(), e.at("dim").get<std::size_t>()});
    }
    for (const auto& c : doc.at("corpora")) {
      manifest.corpora.push_back(CorpusEntry{
          c.at("dataset_id").get<std::string>(),
          ChunkingConfig{c.at("chunk_size").get<std::uint32_t>(), c.at("tokenizer_id").get<std::string>()},
          c.at("n_chunks").get<std::size_t>(), c.at("n_queries").get<std::size_t>()});
    }
  } catch (const json::exception& e) {
    throw DataError("corrupt store manifest " + path.string() + ": " + e.what());
  }
  return manifest;
}

void Store::write_manifest(const Manifest& manifest) const {
  auto entries = manifest.entries;
  std::sort(entries.begin(), entries.end(),
            [](const ManifestEntry& a, const ManifestEntry& b) { return a.address < b.address; });
  auto corpora = manifest.corpora;
  std::sort(corpora.begin(), corpora.end(),
            [](const CorpusEntry& a, const CorpusEntry& b) { return a.dataset_id < b.dataset_id; });
  json doc{{"format", "embsim-store"}, {"version", 1}, {"entries", json::array()}, {"corpora", json::array()}};
  for (const auto& e : entries) {
    doc["entries"].push_back(json{{"dataset_id", e.address.dataset_id},
                                  {"model_id", e.address.model_id},
                                  {"kind", to_string(e.address.kind)},
                                  {"file", e.file},
                                  {"checksum", to_hex(e.checksum)},
                                  {"n", e.rows},
                                  {"dim", e.dim}});
  }
  for (const auto& c : corpora) {
    doc["corpora"].push_back(json{{"dataset_id", c.dataset_id},
                                  {"chunk_size", c.chunking.chunk_size},
                                  {"tokenizer_id", c.chunking.tokenizer_id},
                                  {"n_chunks", c.chunks},
                                  {"n_queries", c.queries}});
  }
  detail::write_file_atomic(root_ / kManifestName, doc.dump(2) + "\n");
}

StoreAddress Store::put(const EmbeddingMatrix& m, bool overwrite) {
  const StoreAddress address{m.dataset_id, m.model_id, m.kind};
  const fs::path path = file_path(address);
  FileLock entry_lock(fs::path(path) += ".lock", false);
  if (!overwrite && fs::exists(path))
    throw DataError("store entry " + to_string(address) + " already exists (use overwrite)");
  const std::string bytes = encode_esf1(m);
  detail::write_file_atomic(path, bytes);

  FileLock manifest_lock(root_ / "manifest.lock", true);
  Manifest manifest = read_manifest();
  std::erase_if(manifest.entries, [&](const ManifestEntry& e) { return e.address == address; });
  manifest.entries.push_back(ManifestEntry{address, fs::relative(path, root_).generic_string(), esf1_checksum(bytes),
                                           m.rows(), m.dim});
  write_manifest(manifest);
  return address;
}

EmbeddingMatrix Store::get(const StoreAddress& address) const {
  const fs::path path = file_path(address);
  const Manifest manifest = read_manifest();
  auto it = std::find_if(manifest.entries.begin(), manifest.entries.end(),
                         [&](const ManifestEntry& e) { return e.address == address; });
  if (it == manifest.entries.end() || !fs::exists(path))
    throw NotFoundError("store entry " + to_string(address) + " not found under " + root_.string());
  const std::string bytes = detail::read_file(path);
  EmbeddingMatrix m = decode_esf1(bytes, path.string());
  if (esf1_checksum(bytes) != it->checksum)
    throw ChecksumError(path.string() + ": checksum " + to_hex(esf1_checksum(bytes)) + " differs from manifest " +
                        to_hex(it->checksum));
  if (m.dataset_id != address.dataset_id || m.model_id != address.model_id || m.kind != address.kind)
    throw DataError(path.string() + ": file header does not match its store address");
  return m;
}

bool Store::contains(const StoreAddress& address) const {
  const Manifest manifest = read_manifest();
  return std::any_of(manifest.entries.begin(), manifest.entries.end(),
                     [&](const ManifestEntry& e) { return e.address == address; }) &&
         fs::exists(file_path(address));
}

std::vector<ManifestEntry> Store::entries() const {
  auto entries = read_manifest().entries;
  std::sort(entries.begin(), entries.end(),
            [](const ManifestEntry& a, const ManifestEntry& b) { return a.address < b.address; });
  return entries;
}

std::vector<std::string> Store::models(const std::string& dataset_id, EmbeddingKind kind) const {
  std::vector<std::string> out;
  for (const auto& e : entries())
    if (e.address.dataset_id == dataset_id && e.address.kind == kind) out.push_back(e.address.model_id);
  return out;
}

std::vector<std::string> Store::datasets() const {
  std::vector<std::string> out;
  const Manifest manifest = read_manifest();
  for (const auto& c : manifest.corpora) out.push_back(c.dataset_id);
  for (const auto& e : manifest.entries) out.push_back(e.address.dataset_id);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<CorpusEntry> Store::corpora() const { return read_manifest().corpora; }

void Store::rebuild_manifest() {
  FileLock manifest_lock(root_ / "manifest.lock", true);
  Manifest manifest;
  if (fs::exists(root_)) {
    std::vector<fs::path> dirs;
    for (const auto& d : fs::directory_iterator(root_))
      if (d.is_directory()) dirs.push_back(d.path());
    std::sort(dirs.begin(), dirs.end());
    for (const auto& dir : dirs) {
      std::vector<fs::path> files;
      for (const auto& f : fs::directory_iterator(dir))
        if (f.is_regular_file() && f.path().extension() == ".esf1") files.push_back(f.path());
      std::sort(files.begin(), files.end());
      for (const auto& file : files) {
        const std::string bytes = detail::read_file(file);
        const EmbeddingMatrix m = decode_esf1(bytes, file.string());
        const StoreAddress address{m.dataset_id, m.model_id, m.kind};
        if (file_path(address) != file) throw DataError(file.string() + ": file name does not match its header");
        manifest.entries.push_back(ManifestEntry{address, fs::relative(file, root_).generic_string(),
                                                 esf1_checksum(bytes), m.rows(), m.dim});
      }
      if (fs::exists(dir / kChunksName)) {
        const ChunkedCorpus corpus = read_chunked_corpus(dir / kChunksName);
        std::size_t queries = 0;
        if (fs::exists(dir / kQueriesName)) queries = parse_queries(dir / kQueriesName, corpus.dataset_id).queries.size();
        manifest.corpora.push_back(CorpusEntry{corpus.dataset_id, corpus.config, corpus.chunks.size(), queries});
      }
    }
  }
  write_manifest(manifest);
}

void Store::put_corpus(const ChunkedCorpus& corpus, const QuerySet& queries) {
  check_id(corpus.dataset_id, "dataset id");
  if (queries.dataset_id != corpus.dataset_id)
    throw DataError("put_corpus: queries belong to " + queries.dataset_id + ", corpus to " + corpus.dataset_id);
  const fs::path dir = root_ / corpus.dataset_id;
  FileLock lock(dir / "corpus.lock", false);
  write_chunked_corpus(corpus, dir / kChunksName);
  write_queries(queries, dir / kQueriesName);

  FileLock manifest_lock(root_ / "manifest.lock", true);
  Manifest manifest = read_manifest();
  std::erase_if(manifest.corpora, [&](const CorpusEntry& c) { return c.dataset_id == corpus.dataset_id; });
  manifest.corpora.push_back(
      CorpusEntry{corpus.dataset_id, corpus.config, corpus.chunks.size(), queries.queries.size()});
  write_manifest(manifest);
}

bool Store::has_corpus(const std::string& dataset_id) const {
  check_id(dataset_id, "dataset id");
  return fs::exists(root_ / dataset_id / kChunksName);
}

ChunkedCorpus Store::get_corpus(const std::string& dataset_id) const {
  check_id(dataset_id, "dataset id");
  const fs::path path = root_ / dataset_id / kChunksName;
  if (!fs::exists(path)) throw NotFoundError("no ingested corpus for dataset " + dataset_id + " under " + root_.string());
  return read_chunked_corpus(path);
}

QuerySet Store::get_queries(const std::string& dataset_id) const {
  check_id(dataset_id, "dataset id");
  const fs::path path = root_ / dataset_id / kQueriesName;
  if (!fs::exists(path)) throw NotFoundError("no ingested queries for dataset " + dataset_id + " under " + root_.string());
  return parse_queries(path, dataset_id);
}

AlignedPair align(const EmbeddingMatrix& a, const EmbeddingMatrix& b) {
  if (a.dataset_id != b.dataset_id)
    throw DataError("align: datasets differ (" + a.dataset_id + " vs " + b.dataset_id + ")");
  if (a.kind != b.kind) throw DataError("align: embedding kinds differ");
  std::unordered_map<ChunkKey, std::size_t> b_index;
  b_index.reserve(b.rows());
  for (std::size_t i = 0; i < b.rows(); ++i) b_index.emplace(b.keys[i], i);

  AlignedPair pair;
  pair.dim_a = a.dim;
  pair.dim_b = b.dim;
  pair.count_a = a.rows();
  pair.count_b = b.rows();
  if (a.keys == b.keys && !a.keys.empty()) {
    pair.shared_keys = a.keys;
    pair.a_values = a.data;
    pair.b_values = b.data;
    return pair;
  }
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto it = b_index.find(a.keys[i]);
    if (it == b_index.end()) continue;
    pair.shared_keys.push_back(a.keys[i]);
    const auto ra = a.row(i);
    const auto rb = b.row(it->second);
    pair.a_rows.insert(pair.a_rows.end(), ra.begin(), ra.end());
    pair.b_rows.insert(pair.b_rows.end(), rb.begin(), rb.end());
  }
  pair.a_values = pair.a_rows;
  pair.b_values = pair.b_rows;
  if (pair.shared_keys.empty())
    throw DataError("align: " + a.model_id + " and " + b.model_id + " share no keys on " + a.dataset_id);
  if (pair.shared_keys.size() < std::max(a.rows(), b.rows()))
    log().warn("event=partial_alignment dataset={} model_a={} model_b={} rows_a={} rows_b={} shared={}", a.dataset_id,
               a.model_id, b.model_id, a.rows(), b.rows(), pair.shared_keys.size());
  return pair;
}

}  // namespace embsim
