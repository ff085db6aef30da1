#include "condel/session.hpp"

#include <array>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include "condel/error.hpp"

namespace condel {

namespace {

constexpr std::array<std::pair<std::string_view, Condition>, 4> kConditions{{
    {"manual", Condition::manual},
    {"labels", Condition::labels},
    {"labels_local", Condition::labels_local},
    {"labels_local_global", Condition::labels_local_global},
}};

constexpr std::array<std::string_view, kActionKindCount> kActionNames{
    "search",    "clear_search",       "filter_toxic",      "filter_nontoxic", "filter_all",
    "load_random", "get_page",         "add_rule",          "remove_rule",     "click_global_token",
    "view_instructions", "start_tutorial", "finish",
};

}  // namespace

std::string_view to_string(Condition condition) {
  for (const auto& [name, c] : kConditions) {
    if (c == condition) return name;
  }
  return "manual";
}

std::optional<Condition> parse_condition(std::string_view text) {
  for (const auto& [name, c] : kConditions) {
    if (name == text) return c;
  }
  return std::nullopt;
}

std::string_view to_string(ActionKind kind) { return kActionNames[static_cast<std::size_t>(kind)]; }

std::optional<ActionKind> parse_action_kind(std::string_view text) {
  for (std::size_t i = 0; i < kActionNames.size(); ++i) {
    if (kActionNames[i] == text) return static_cast<ActionKind>(i);
  }
  return std::nullopt;
}

nlohmann::ordered_json to_json(const SessionResult& r) {
  nlohmann::ordered_json doc;
  doc["session_id"] = r.session_id;
  doc["condition"] = to_string(r.condition);
  doc["corpus"] = r.corpus;
  doc["mode"] = to_string(r.mode);
  doc["rules"] = r.rules;
  doc["n_actions"] = r.n_actions;
  doc["n_rules"] = r.n_rules;
  doc["elapsed_minutes"] = r.elapsed_minutes;
  doc["rules_per_minute"] =
      r.rules_per_minute ? nlohmann::ordered_json(*r.rules_per_minute) : nlohmann::ordered_json(nullptr);
  doc["started_at"] = to_millis(r.started_at);
  doc["finished_at"] = to_millis(r.finished_at);
  return doc;
}

// ---------------------------------------------------------------------------

Session::Session(std::string id, Condition condition, std::string corpus_name, std::size_t min_rules,
                 Timestamp started_at)
    : id_(std::move(id)),
      condition_(condition),
      corpus_name_(std::move(corpus_name)),
      min_rules_(min_rules),
      rules_(mode_for(condition)),
      started_at_(started_at) {
  if (id_.empty()) throw Error(ErrorKind::invalid, "empty session id", "session");
}

void Session::check_appendable(Timestamp at) const {
  if (finished()) throw Error(ErrorKind::conflict, "session already finished", "session");
  Timestamp last = actions_.empty() ? started_at_ : actions_.back().at;
  if (at < last) throw Error(ErrorKind::invalid, "action timestamp goes backwards", "at");
}

void Session::log_action(ActionRecord record) {
  auto kind = record.known_kind();
  if (kind == ActionKind::add_rule || kind == ActionKind::remove_rule || kind == ActionKind::finish) {
    throw Error(ErrorKind::invalid, record.kind + " records are written by the session itself", "kind");
  }
  if (record.kind.empty()) throw Error(ErrorKind::invalid, "empty action kind", "kind");
  check_appendable(record.at);
  actions_.push_back(std::move(record));
}

const Rule& Session::add_rule(std::string_view raw, Timestamp at) {
  check_appendable(at);
  RuleSet next = rules_.with_rule(raw, at);
  actions_.push_back(ActionRecord::make(ActionKind::add_rule, next.rules().back().keyword, at));
  rules_ = std::move(next);
  return rules_.rules().back();
}

void Session::remove_rule(std::string_view raw, Timestamp at) {
  check_appendable(at);
  RuleSet next = rules_.without_rule(raw);
  actions_.push_back(ActionRecord::make(ActionKind::remove_rule, normalize_keyword(raw), at));
  rules_ = std::move(next);
}

SessionResult Session::finish(Timestamp at) {
  check_appendable(at);
  if (rules_.size() < min_rules_) {
    throw Error(ErrorKind::precondition,
                "at least " + std::to_string(min_rules_) + " rules required (have " +
                    std::to_string(rules_.size()) + ")",
                "rules");
  }
  actions_.push_back(ActionRecord::make(ActionKind::finish, "", at));
  finished_at_ = at;
  return result();
}

SessionResult Session::result() const {
  if (!finished_at_) throw Error(ErrorKind::precondition, "session not finished", "session");
  SessionResult r;
  r.session_id = id_;
  r.condition = condition_;
  r.corpus = corpus_name_;
  r.mode = rules_.mode();
  r.rules = rules_.keywords();
  r.n_actions = actions_.size();
  r.n_rules = rules_.size();
  r.started_at = started_at_;
  r.finished_at = *finished_at_;
  auto elapsed_ms = (*finished_at_ - started_at_).count();
  r.elapsed_minutes = static_cast<double>(elapsed_ms) / 60000.0;
  if (elapsed_ms > 0) r.rules_per_minute = static_cast<double>(r.n_rules) / r.elapsed_minutes;
  return r;
}

std::string new_session_id() {
  std::random_device rd;
  std::ostringstream out;
  out << std::hex;
  for (int i = 0; i < 4; ++i) {
    char buf[9];
    std::snprintf(buf, sizeof buf, "%08x", static_cast<unsigned>(rd()));
    out << buf;
  }
  return out.str();
}

Session start_session(Condition condition, const Corpus& corpus, std::size_t min_rules, Timestamp at,
                      std::string id) {
  if (condition != Condition::manual && !corpus.has_predictions()) {
    throw Error(ErrorKind::precondition,
                "condition " + std::string(to_string(condition)) + " needs a corpus with predictions",
                "condition");
  }
  return Session(std::move(id), condition, corpus.name, min_rules, at);
}

Session replay(std::string id, Condition condition, std::string corpus_name, std::size_t min_rules,
               Timestamp started_at, const std::vector<ActionRecord>& actions) {
  Session session(std::move(id), condition, std::move(corpus_name), min_rules, started_at);
  for (const auto& record : actions) {
    switch (record.known_kind().value_or(ActionKind::search)) {
      case ActionKind::add_rule:
        session.add_rule(record.payload, record.at);
        break;
      case ActionKind::remove_rule:
        session.remove_rule(record.payload, record.at);
        break;
      case ActionKind::finish:
        session.finish(record.at);
        break;
      default:
        session.log_action(record);
        break;
    }
  }
  return session;
}

// ---------------------------------------------------------------------------

SessionStore::SessionStore(std::filesystem::path data_dir) : data_dir_(std::move(data_dir)) {
  std::error_code ec;
  std::filesystem::create_directories(data_dir_, ec);
  if (ec || !std::filesystem::is_directory(data_dir_)) {
    throw Error(ErrorKind::invalid, "cannot create data directory " + data_dir_.string(), "data_dir");
  }
  auto probe = data_dir_ / ".write-probe";
  {
    std::ofstream out(probe);
    if (!out) throw Error(ErrorKind::invalid, "data directory not writable: " + data_dir_.string(), "data_dir");
  }
  std::filesystem::remove(probe, ec);
}

std::filesystem::path SessionStore::event_path(const std::string& id) const {
  return data_dir_ / (id + ".jsonl");
}

std::string SessionStore::create(Condition condition, const Corpus& corpus, std::size_t min_rules,
                                 Timestamp at) {
  Session session = start_session(condition, corpus, min_rules, at);
  const std::string id = session.id();

  nlohmann::ordered_json start;
  start["event"] = "start";
  start["session_id"] = id;
  start["condition"] = to_string(condition);
  start["corpus"] = corpus.name;
  start["mode"] = to_string(mode_for(condition));
  start["min_rules"] = min_rules;
  start["at"] = to_millis(at);
  {
    std::ofstream out(event_path(id), std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::invalid, "cannot write session file for " + id, "data_dir");
    out << start.dump() << '\n';
  }

  std::lock_guard lock(map_mutex_);
  sessions_.emplace(id, std::make_shared<Entry>(std::move(session)));
  return id;
}

std::shared_ptr<SessionStore::Entry> SessionStore::lookup(const std::string& id) const {
  std::lock_guard lock(map_mutex_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw Error(ErrorKind::not_found, "unknown session", "session");
  return it->second;
}

std::vector<std::string> SessionStore::ids() const {
  std::lock_guard lock(map_mutex_);
  std::vector<std::string> out;
  for (const auto& [id, entry] : sessions_) out.push_back(id);
  return out;
}

void SessionStore::persist(const Session& session, std::size_t first_new_action) {
  const auto& actions = session.actions();
  if (first_new_action >= actions.size()) return;
  std::ofstream out(event_path(session.id()), std::ios::binary | std::ios::app);
  for (std::size_t i = first_new_action; i < actions.size(); ++i) {
    nlohmann::ordered_json line;
    line["event"] = "action";
    line["kind"] = actions[i].kind;
    line["payload"] = actions[i].payload;
    line["at"] = to_millis(actions[i].at);
    out << line.dump() << '\n';
  }
  out.flush();
  if (session.finished()) {
    std::ofstream result(data_dir_ / (session.id() + ".json"), std::ios::binary | std::ios::trunc);
    result << to_json(session.result()).dump(2) << '\n';
  }
}

Session SessionStore::load(const std::filesystem::path& event_file) {
  std::ifstream in(event_file);
  if (!in) throw Error(ErrorKind::not_found, "cannot read session file " + event_file.string(), "path");

  std::optional<nlohmann::json> start;
  std::vector<ActionRecord> actions;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      auto event = nlohmann::json::parse(line);
      auto type = event.at("event").get<std::string>();
      if (type == "start") {
        start = std::move(event);
      } else if (type == "action") {
        actions.push_back({event.at("kind").get<std::string>(), event.at("payload").get<std::string>(),
                           from_millis(event.at("at").get<std::int64_t>())});
      }
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::invalid, "malformed session event at line " + std::to_string(line_no) +
                                          " (" + e.what() + ")");
    }
  }
  if (!start) throw Error(ErrorKind::invalid, "session file has no start event");
  auto condition = parse_condition(start->at("condition").get<std::string>());
  if (!condition) throw Error(ErrorKind::invalid, "unknown condition in session file", "condition");
  return replay(start->at("session_id").get<std::string>(), *condition,
                start->at("corpus").get<std::string>(), start->at("min_rules").get<std::size_t>(),
                from_millis(start->at("at").get<std::int64_t>()), actions);
}

}  // namespace condel
