#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "condel/clock.hpp"
#include "condel/corpus.hpp"
#include "condel/session.hpp"

namespace condel {

struct CorpusSource {
  std::filesystem::path path;
  std::optional<std::string> name;
  std::optional<std::filesystem::path> predictions;  // JSONL to import after loading
};

struct ServerConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::vector<CorpusSource> corpora;
  std::optional<std::filesystem::path> model;  // annotates every corpus when set
  std::filesystem::path data_dir = "sessions";
  Condition default_condition = Condition::labels_local_global;
  std::size_t page_size = 20;
  std::size_t min_rules = kDefaultMinRules;
  std::size_t global_k = 15;
  std::vector<std::string> cors_allowlist;
  // Operator flag: serve GET /api/evaluate for sessions that have not finished.
  bool expose_evaluation = false;
};

// Relative paths in the file are resolved against the file's directory.
ServerConfig parse_server_config(std::string_view json_text, const std::filesystem::path& base_dir = {});
ServerConfig load_server_config(const std::filesystem::path& path);

// Loads the configured corpora, importing or generating predictions.
std::vector<Corpus> load_server_corpora(const ServerConfig& config);

// HTTP+JSON API under /api. Corpora and indexes are shared read-only;
// requests on one session are serialized by the session store.
class Server {
 public:
  Server(ServerConfig config, std::vector<Corpus> corpora, Clock clock = system_now);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  // Returns the bound port (a free one when `port` is 0); throws on failure.
  int bind(const std::string& host, int port);
  // Blocks until stop() is called.
  void listen();
  void stop();

  SessionStore& sessions();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace condel
