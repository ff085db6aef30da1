#include "condel/server.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

#include "condel/error.hpp"
#include "condel/index.hpp"
#include "condel/metrics.hpp"
#include "condel/model.hpp"
#include "condel/rules.hpp"
#include "httplib.h"
#include "json.hpp"

namespace condel {

using ojson = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Configuration

ServerConfig parse_server_config(std::string_view json_text, const std::filesystem::path& base_dir) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::invalid, std::string("malformed config JSON (") + e.what() + ")");
  }
  if (!doc.is_object()) throw Error(ErrorKind::invalid, "config must be a JSON object");

  auto resolve = [&](const std::string& p) {
    std::filesystem::path path(p);
    return path.is_absolute() || base_dir.empty() ? path : base_dir / path;
  };

  ServerConfig config;
  try {
    config.host = doc.value("host", config.host);
    config.port = doc.value("port", config.port);
    config.page_size = doc.value("page_size", config.page_size);
    config.min_rules = doc.value("min_rules", config.min_rules);
    config.global_k = doc.value("global_k", config.global_k);
    config.expose_evaluation = doc.value("expose_evaluation", config.expose_evaluation);
    config.cors_allowlist = doc.value("cors_allowlist", config.cors_allowlist);
    if (doc.contains("data_dir")) config.data_dir = resolve(doc["data_dir"].get<std::string>());
    if (doc.contains("model")) config.model = resolve(doc["model"].get<std::string>());
    if (doc.contains("default_condition")) {
      auto c = parse_condition(doc["default_condition"].get<std::string>());
      if (!c) throw Error(ErrorKind::invalid, "unknown default_condition", "default_condition");
      config.default_condition = *c;
    }
    for (const auto& entry : doc.value("corpora", nlohmann::json::array())) {
      CorpusSource source;
      if (entry.is_string()) {
        source.path = resolve(entry.get<std::string>());
      } else {
        source.path = resolve(entry.at("path").get<std::string>());
        if (entry.contains("name")) source.name = entry["name"].get<std::string>();
        if (entry.contains("predictions")) source.predictions = resolve(entry["predictions"].get<std::string>());
      }
      config.corpora.push_back(std::move(source));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::invalid, std::string("bad config field (") + e.what() + ")");
  }
  if (config.corpora.empty()) throw Error(ErrorKind::invalid, "config needs at least one corpus", "corpora");
  if (config.page_size == 0) throw Error(ErrorKind::invalid, "page_size must be positive", "page_size");
  return config;
}

ServerConfig load_server_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::not_found, "cannot read config file " + path.string(), "path");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_server_config(buffer.str(), path.parent_path());
}

std::vector<Corpus> load_server_corpora(const ServerConfig& config) {
  std::optional<LinearRationaleModel> model;
  if (config.model) model = load_model(*config.model);
  std::vector<Corpus> corpora;
  for (const auto& source : config.corpora) {
    LoadOptions options;
    options.name = source.name;
    Corpus corpus = load_corpus(source.path, options);
    if (source.predictions) corpus = import_predictions(std::move(corpus), *source.predictions);
    if (model) corpus = annotate(*model, std::move(corpus));
    corpora.push_back(std::move(corpus));
  }
  return corpora;
}

// ---------------------------------------------------------------------------

namespace {

struct Workspace {
  InvertedIndex index;
  std::vector<TokenFrequency> global;
};

int status_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid:
      return 422;
    case ErrorKind::not_found:
      return 404;
    case ErrorKind::conflict:
      return 409;
    case ErrorKind::precondition:
      return 409;
  }
  return 500;
}

void send_json(httplib::Response& res, int status, const ojson& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message,
                const std::string& field = {}) {
  ojson body;
  body["error"] = message;
  if (!field.empty()) body["field"] = field;
  send_json(res, status, body);
}

std::size_t size_param(const httplib::Request& req, const char* key, std::size_t fallback) {
  if (!req.has_param(key)) return fallback;
  const auto text = req.get_param_value(key);
  std::size_t value = 0;
  auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || end != text.data() + text.size()) {
    throw Error(ErrorKind::invalid, std::string("parameter ") + key + " must be a non-negative integer", key);
  }
  return value;
}

nlohmann::json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return nlohmann::json::object();
  try {
    auto body = nlohmann::json::parse(req.body);
    if (!body.is_object()) throw Error(ErrorKind::invalid, "request body must be a JSON object", "body");
    return body;
  } catch (const nlohmann::json::exception&) {
    throw Error(ErrorKind::invalid, "request body is not valid JSON", "body");
  }
}

std::string body_string(const nlohmann::json& body, const char* key) {
  auto it = body.find(key);
  if (it == body.end() || it->is_null()) return {};
  if (!it->is_string()) throw Error(ErrorKind::invalid, std::string(key) + " must be a string", key);
  return it->get<std::string>();
}

// Comment card as a session sees it. Gold labels never leave the server
// through this path; prediction fields follow the condition.
ojson comment_card(const Comment& c, Condition condition) {
  ojson card;
  card["id"] = c.id;
  card["text"] = c.text;
  if (c.pred && shows_labels(condition)) {
    card["pred"] = to_string(c.pred->label);
    if (shows_rationales(condition)) {
      auto spans = ojson::array();
      for (const auto& s : c.pred->rationale) spans.push_back({s.start, s.end});
      card["rationale"] = std::move(spans);
    }
  }
  return card;
}

ojson stats_json(const InvertedIndex& index, const std::string& keyword, Condition condition) {
  auto stats = rule_stats(index, keyword);
  ojson row;
  row["keyword"] = keyword;
  row["total_matched"] = stats.total_matched;
  if (shows_labels(condition)) row["predicted_toxic_matched"] = stats.predicted_toxic_matched;
  return row;
}

ojson global_json(const std::vector<TokenFrequency>& entries) {
  auto arr = ojson::array();
  for (const auto& e : entries) {
    ojson item;
    item["token"] = e.token;
    item["frequency"] = e.frequency;
    arr.push_back(std::move(item));
  }
  return arr;
}

}  // namespace

struct Server::Impl {
  ServerConfig config;
  Clock clock;
  std::map<std::string, Workspace, std::less<>> workspaces;
  std::string default_corpus;
  SessionStore store;
  httplib::Server http;

  Impl(ServerConfig cfg, std::vector<Corpus> corpora, Clock clk)
      : config(std::move(cfg)), clock(std::move(clk)), store(config.data_dir) {
    if (corpora.empty()) throw Error(ErrorKind::invalid, "at least one corpus is required", "corpora");
    for (auto& corpus : corpora) {
      validate_corpus(corpus);
      std::string name = corpus.name;
      auto global = global_explanations(corpus, config.global_k);
      auto index = InvertedIndex::build(std::move(corpus));
      if (!workspaces.emplace(name, Workspace{std::move(index), std::move(global)}).second) {
        throw Error(ErrorKind::conflict, "duplicate corpus name " + name, "corpora");
      }
      if (default_corpus.empty()) default_corpus = name;
    }
    routes();
  }

  const Workspace& workspace(const std::string& name) const {
    auto it = workspaces.find(name);
    if (it == workspaces.end()) throw Error(ErrorKind::not_found, "unknown corpus " + name, "corpus");
    return it->second;
  }

  static std::string session_id(const httplib::Request& req) {
    std::string id = req.has_param("session") ? req.get_param_value("session")
                                              : req.get_header_value("X-Session-Id");
    if (id.empty()) throw Error(ErrorKind::invalid, "missing session id", "session");
    return id;
  }

  // Never earlier than the session's last record, so a stepping wall clock
  // cannot break the log's ordering.
  Timestamp now_for(const Session& session) const {
    Timestamp last = session.actions().empty() ? session.started_at() : session.actions().back().at;
    return std::max(clock(), last);
  }

  void cors(const httplib::Request& req, httplib::Response& res) const {
    auto origin = req.get_header_value("Origin");
    if (origin.empty()) return;
    const auto& allow = config.cors_allowlist;
    if (std::find(allow.begin(), allow.end(), origin) != allow.end() ||
        std::find(allow.begin(), allow.end(), "*") != allow.end()) {
      res.set_header("Access-Control-Allow-Origin", origin);
      res.set_header("Access-Control-Allow-Methods", "GET, POST, DELETE, OPTIONS");
      res.set_header("Access-Control-Allow-Headers", "Content-Type, X-Session-Id");
      res.set_header("Vary", "Origin");
    }
  }

  template <typename Handler>
  httplib::Server::Handler guarded(Handler handler) {
    return [this, handler](const httplib::Request& req, httplib::Response& res) {
      cors(req, res);
      try {
        handler(req, res);
      } catch (const Error& e) {
        send_error(res, status_for(e.kind()), e.what(), e.field());
      } catch (const std::exception& e) {
        send_error(res, 500, e.what());
      }
    };
  }

  void routes();
  void create_session(const httplib::Request& req, httplib::Response& res);
  void search(const httplib::Request& req, httplib::Response& res);
  void random(const httplib::Request& req, httplib::Response& res);
  void add_rule(const httplib::Request& req, httplib::Response& res);
  void remove_rule(const httplib::Request& req, httplib::Response& res);
  void list_rules(const httplib::Request& req, httplib::Response& res);
  void log_gesture(const httplib::Request& req, httplib::Response& res);
  void finish(const httplib::Request& req, httplib::Response& res);
  void evaluation(const httplib::Request& req, httplib::Response& res);
  void session_info(const httplib::Request& req, httplib::Response& res);
  void health(const httplib::Request& req, httplib::Response& res);
};

void Server::Impl::routes() {
  http.Options(R"(/api/.*)", [this](const httplib::Request& req, httplib::Response& res) {
    cors(req, res);
    res.status = 204;
  });
  http.Post("/api/session", guarded([this](auto& req, auto& res) { create_session(req, res); }));
  http.Get("/api/session", guarded([this](auto& req, auto& res) { session_info(req, res); }));
  http.Get("/api/search", guarded([this](auto& req, auto& res) { search(req, res); }));
  http.Get("/api/random", guarded([this](auto& req, auto& res) { random(req, res); }));
  http.Post("/api/rules", guarded([this](auto& req, auto& res) { add_rule(req, res); }));
  http.Get("/api/rules", guarded([this](auto& req, auto& res) { list_rules(req, res); }));
  http.Delete(R"(/api/rules/(.+))", guarded([this](auto& req, auto& res) { remove_rule(req, res); }));
  http.Post("/api/actions", guarded([this](auto& req, auto& res) { log_gesture(req, res); }));
  http.Post("/api/finish", guarded([this](auto& req, auto& res) { finish(req, res); }));
  http.Get("/api/evaluate", guarded([this](auto& req, auto& res) { evaluation(req, res); }));
  http.Get("/api/health", guarded([this](auto& req, auto& res) { health(req, res); }));
}

void Server::Impl::create_session(const httplib::Request& req, httplib::Response& res) {
  auto body = parse_body(req);
  Condition condition = config.default_condition;
  if (auto text = body_string(body, "condition"); !text.empty()) {
    auto parsed = parse_condition(text);
    if (!parsed) throw Error(ErrorKind::invalid, "unknown condition", "condition");
    condition = *parsed;
  }
  std::string corpus = body_string(body, "corpus");
  if (corpus.empty()) corpus = default_corpus;
  std::size_t min_rules = config.min_rules;
  if (auto it = body.find("min_rules"); it != body.end()) {
    if (!it->is_number_unsigned()) throw Error(ErrorKind::invalid, "min_rules must be a non-negative integer", "min_rules");
    min_rules = it->get<std::size_t>();
  }
  const auto& ws = workspace(corpus);
  auto id = store.create(condition, ws.index.corpus(), min_rules, clock());

  ojson out;
  out["session_id"] = id;
  out["condition"] = to_string(condition);
  out["corpus"] = corpus;
  out["mode"] = to_string(mode_for(condition));
  out["min_rules"] = min_rules;
  if (shows_global_explanations(condition)) out["global_explanations"] = global_json(ws.global);
  send_json(res, 201, out);
}

void Server::Impl::session_info(const httplib::Request& req, httplib::Response& res) {
  store.with_session(session_id(req), [&](Session& session) {
    ojson out;
    out["session_id"] = session.id();
    out["condition"] = to_string(session.condition());
    out["corpus"] = session.corpus_name();
    out["mode"] = to_string(session.rules().mode());
    out["min_rules"] = session.min_rules();
    out["n_actions"] = session.actions().size();
    out["n_rules"] = session.rules().size();
    out["finished"] = session.finished();
    if (shows_global_explanations(session.condition())) {
      out["global_explanations"] = global_json(workspace(session.corpus_name()).global);
    }
    send_json(res, 200, out);
  });
}

void Server::Impl::search(const httplib::Request& req, httplib::Response& res) {
  store.with_session(session_id(req), [&](Session& session) {
    const auto& ws = workspace(session.corpus_name());
    std::string keyword;
    try {
      keyword = normalize_keyword(req.get_param_value("q"));
    } catch (const Error& e) {
      throw Error(e.kind(), e.what(), "q");
    }
    auto filter = parse_pred_filter(req.get_param_value("filter"));
    if (!filter) throw Error(ErrorKind::invalid, "unknown filter", "filter");
    if (*filter != PredFilter::all && !shows_labels(session.condition())) {
      throw Error(ErrorKind::invalid, "prediction filters are unavailable in the manual condition", "filter");
    }
    const std::size_t page = size_param(req, "page", 0);
    const std::size_t page_size = size_param(req, "page_size", config.page_size);

    ActionKind kind = page > 0 ? ActionKind::get_page : ActionKind::search;
    if (req.has_param("kind")) {
      auto requested = parse_action_kind(req.get_param_value("kind"));
      static constexpr ActionKind kSearchKinds[] = {
          ActionKind::search,       ActionKind::get_page,   ActionKind::filter_toxic,
          ActionKind::filter_nontoxic, ActionKind::filter_all, ActionKind::click_global_token};
      if (!requested || std::find(std::begin(kSearchKinds), std::end(kSearchKinds), *requested) ==
                            std::end(kSearchKinds)) {
        throw Error(ErrorKind::invalid, "kind not valid for a search request", "kind");
      }
      kind = *requested;
    }

    auto result = condel::search(ws.index, keyword, *filter, page, page_size);
    ojson payload;
    payload["q"] = keyword;
    payload["filter"] = to_string(*filter);
    payload["page"] = page;
    session.log_action(ActionRecord::make(kind, payload.dump(), now_for(session)));

    ojson out;
    out["total"] = result.total;
    out["page"] = result.page_index;
    out["page_size"] = result.page_size;
    auto items = ojson::array();
    for (const auto& id : result.items) {
      items.push_back(comment_card(ws.index.comment(*ws.index.find(id)), session.condition()));
    }
    out["items"] = std::move(items);
    send_json(res, 200, out);
  });
}

void Server::Impl::random(const httplib::Request& req, httplib::Response& res) {
  store.with_session(session_id(req), [&](Session& session) {
    const auto& ws = workspace(session.corpus_name());
    const std::size_t k = size_param(req, "k", config.page_size);
    const std::uint64_t seed = size_param(req, "seed", 0);
    auto ids = random_sample(ws.index.corpus(), k, seed);

    ojson payload;
    payload["k"] = k;
    payload["seed"] = seed;
    session.log_action(ActionRecord::make(ActionKind::load_random, payload.dump(), now_for(session)));

    ojson out;
    auto items = ojson::array();
    for (const auto& id : ids) {
      items.push_back(comment_card(ws.index.comment(*ws.index.find(id)), session.condition()));
    }
    out["items"] = std::move(items);
    send_json(res, 200, out);
  });
}

void Server::Impl::add_rule(const httplib::Request& req, httplib::Response& res) {
  auto body = parse_body(req);
  store.with_session(session_id(req), [&](Session& session) {
    const auto& rule = session.add_rule(body_string(body, "keyword"), now_for(session));
    send_json(res, 201, stats_json(workspace(session.corpus_name()).index, rule.keyword, session.condition()));
  });
}

void Server::Impl::remove_rule(const httplib::Request& req, httplib::Response& res) {
  store.with_session(session_id(req), [&](Session& session) {
    session.remove_rule(req.matches[1].str(), now_for(session));
    ojson out;
    out["removed"] = normalize_keyword(req.matches[1].str());
    out["n_rules"] = session.rules().size();
    send_json(res, 200, out);
  });
}

void Server::Impl::list_rules(const httplib::Request& req, httplib::Response& res) {
  store.with_session(session_id(req), [&](Session& session) {
    const auto& index = workspace(session.corpus_name()).index;
    auto rows = ojson::array();
    for (const auto& rule : session.rules().rules()) {
      rows.push_back(stats_json(index, rule.keyword, session.condition()));
    }
    ojson out;
    out["rules"] = std::move(rows);
    out["n_rules"] = session.rules().size();
    out["min_rules"] = session.min_rules();
    out["can_finish"] = !session.finished() && session.rules().size() >= session.min_rules();
    send_json(res, 200, out);
  });
}

void Server::Impl::log_gesture(const httplib::Request& req, httplib::Response& res) {
  auto body = parse_body(req);
  auto kind = body_string(body, "kind");
  auto known = parse_action_kind(kind);
  if (known == ActionKind::search || known == ActionKind::get_page || known == ActionKind::load_random) {
    throw Error(ErrorKind::invalid, kind + " is logged by its data endpoint", "kind");
  }
  store.with_session(session_id(req), [&](Session& session) {
    session.log_action({kind, body_string(body, "payload"), now_for(session)});
    ojson out;
    out["n_actions"] = session.actions().size();
    send_json(res, 201, out);
  });
}

namespace {

// Evaluation needs gold labels; a corpus without them still finishes.
void attach_evaluation(ojson& out, const InvertedIndex& index, const RuleSet& rules) {
  try {
    auto report = evaluate(index, rules);
    out["evaluation"] = to_json(report);
    out["bonus_usd"] = report.bonus.dollars();
  } catch (const Error& e) {
    out["evaluation"] = nullptr;
    out["evaluation_error"] = e.what();
  }
}

}  // namespace

void Server::Impl::finish(const httplib::Request& req, httplib::Response& res) {
  store.with_session(session_id(req), [&](Session& session) {
    auto result = session.finish(now_for(session));
    ojson out;
    out["result"] = to_json(result);
    attach_evaluation(out, workspace(session.corpus_name()).index, session.rules());
    send_json(res, 200, out);
  });
}

void Server::Impl::evaluation(const httplib::Request& req, httplib::Response& res) {
  store.with_session(session_id(req), [&](Session& session) {
    if (!session.finished() && !config.expose_evaluation) {
      send_error(res, 403, "evaluation is available after finish", "session");
      return;
    }
    ojson out;
    attach_evaluation(out, workspace(session.corpus_name()).index, session.rules());
    send_json(res, 200, out);
  });
}

void Server::Impl::health(const httplib::Request&, httplib::Response& res) {
  ojson out;
  out["status"] = "ok";
  auto corpora = ojson::array();
  for (const auto& [name, ws] : workspaces) {
    ojson item;
    item["name"] = name;
    item["comments"] = ws.index.doc_count();
    item["has_predictions"] = ws.index.corpus().has_predictions();
    corpora.push_back(std::move(item));
  }
  out["corpora"] = std::move(corpora);
  send_json(res, 200, out);
}

// ---------------------------------------------------------------------------

Server::Server(ServerConfig config, std::vector<Corpus> corpora, Clock clock)
    : impl_(std::make_unique<Impl>(std::move(config), std::move(corpora), std::move(clock))) {}

Server::~Server() { stop(); }

int Server::bind(const std::string& host, int port) {
  if (port == 0) {
    int bound = impl_->http.bind_to_any_port(host);
    if (bound < 0) throw Error(ErrorKind::invalid, "cannot bind " + host, "host");
    return bound;
  }
  if (!impl_->http.bind_to_port(host, port)) {
    throw Error(ErrorKind::invalid, "cannot bind " + host + ":" + std::to_string(port), "port");
  }
  return port;
}

void Server::listen() { impl_->http.listen_after_bind(); }

void Server::stop() {
  if (impl_) impl_->http.stop();
}

SessionStore& Server::sessions() { return impl_->store; }

}  // namespace condel
