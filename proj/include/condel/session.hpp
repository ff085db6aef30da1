#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "condel/clock.hpp"
#include "condel/corpus.hpp"
#include "condel/rules.hpp"
#include "json.hpp"

namespace condel {

// What assistance the rule builder sees.
enum class Condition { manual, labels, labels_local, labels_local_global };

std::string_view to_string(Condition condition);
std::optional<Condition> parse_condition(std::string_view text);

inline bool shows_labels(Condition c) { return c != Condition::manual; }
inline bool shows_rationales(Condition c) {
  return c == Condition::labels_local || c == Condition::labels_local_global;
}
inline bool shows_global_explanations(Condition c) { return c == Condition::labels_local_global; }
// Without a model, rules report every match.
inline RuleMode mode_for(Condition c) {
  return c == Condition::manual ? RuleMode::report_all : RuleMode::delegation;
}

enum class ActionKind {
  search,
  clear_search,
  filter_toxic,
  filter_nontoxic,
  filter_all,
  load_random,
  get_page,
  add_rule,
  remove_rule,
  click_global_token,
  view_instructions,
  start_tutorial,
  finish,
};
inline constexpr std::size_t kActionKindCount = 13;

std::string_view to_string(ActionKind kind);
std::optional<ActionKind> parse_action_kind(std::string_view text);

// `kind` is stored as text so records of kinds this build does not know
// survive a load/save cycle.
struct ActionRecord {
  std::string kind;
  std::string payload;
  Timestamp at{};

  static ActionRecord make(ActionKind kind, std::string payload, Timestamp at) {
    return {std::string(to_string(kind)), std::move(payload), at};
  }
  std::optional<ActionKind> known_kind() const { return parse_action_kind(kind); }
  friend bool operator==(const ActionRecord&, const ActionRecord&) = default;
};

inline constexpr std::size_t kDefaultMinRules = 10;

struct SessionResult {
  std::string session_id;
  Condition condition = Condition::manual;
  std::string corpus;
  RuleMode mode = RuleMode::report_all;
  std::vector<std::string> rules;
  std::size_t n_actions = 0;
  std::size_t n_rules = 0;
  double elapsed_minutes = 0.0;
  std::optional<double> rules_per_minute;  // absent when no time elapsed
  Timestamp started_at{};
  Timestamp finished_at{};
};

nlohmann::ordered_json to_json(const SessionResult& result);

// One rule-building run. Rule changes go through add_rule/remove_rule, which
// edit the ruleset and append the matching record together.
class Session {
 public:
  Session(std::string id, Condition condition, std::string corpus_name, std::size_t min_rules,
          Timestamp started_at);

  const std::string& id() const { return id_; }
  Condition condition() const { return condition_; }
  const std::string& corpus_name() const { return corpus_name_; }
  std::size_t min_rules() const { return min_rules_; }
  const RuleSet& rules() const { return rules_; }
  const std::vector<ActionRecord>& actions() const { return actions_; }
  Timestamp started_at() const { return started_at_; }
  std::optional<Timestamp> finished_at() const { return finished_at_; }
  bool finished() const { return finished_at_.has_value(); }

  // Appends a non-mutating record. Rejects add_rule, remove_rule and finish
  // (use the dedicated calls), finished sessions, and time regressions.
  void log_action(ActionRecord record);
  const Rule& add_rule(std::string_view raw, Timestamp at);
  void remove_rule(std::string_view raw, Timestamp at);
  // Throws Error(precondition) when fewer than min_rules rules exist.
  SessionResult finish(Timestamp at);

  SessionResult result() const;  // only valid once finished

 private:
  void check_appendable(Timestamp at) const;

  std::string id_;
  Condition condition_;
  std::string corpus_name_;
  std::size_t min_rules_;
  RuleSet rules_;
  std::vector<ActionRecord> actions_;
  Timestamp started_at_;
  std::optional<Timestamp> finished_at_;
};

std::string new_session_id();

// Throws Error(precondition) for a non-manual condition on a corpus without
// predictions.
Session start_session(Condition condition, const Corpus& corpus, std::size_t min_rules,
                      Timestamp at, std::string id = new_session_id());

inline Session log_action(Session session, ActionRecord record) {
  session.log_action(std::move(record));
  return session;
}

inline SessionResult finish_session(Session& session, const Clock& clock) {
  return session.finish(clock());
}

// Re-executes a log through the Session API. The result has the same
// ruleset, records and finish state as the session that produced the log.
Session replay(std::string id, Condition condition, std::string corpus_name, std::size_t min_rules,
               Timestamp started_at, const std::vector<ActionRecord>& actions);

// Append-only persistence: `<dir>/<id>.jsonl` holds a start event followed by
// one line per action; `<dir>/<id>.json` holds the SessionResult once the
// session finishes. Calls on one session are serialized; distinct sessions
// proceed independently.
class SessionStore {
 public:
  explicit SessionStore(std::filesystem::path data_dir);

  const std::filesystem::path& data_dir() const { return data_dir_; }

  std::string create(Condition condition, const Corpus& corpus, std::size_t min_rules, Timestamp at);

  // Runs `fn(Session&)` under the session's lock and persists any records it
  // appended. Throws Error(not_found) for unknown ids.
  template <typename Fn>
  auto with_session(const std::string& id, Fn&& fn) {
    auto entry = lookup(id);
    std::lock_guard lock(entry->mutex);
    const std::size_t before = entry->session.actions().size();
    struct Persist {
      SessionStore* store;
      Entry* entry;
      std::size_t before;
      ~Persist() { store->persist(entry->session, before); }
    } persist{this, entry.get(), before};
    return fn(entry->session);
  }

  std::vector<std::string> ids() const;

  // Rebuilds a session from its event file by replay.
  static Session load(const std::filesystem::path& event_file);

 private:
  struct Entry {
    explicit Entry(Session s) : session(std::move(s)) {}
    std::mutex mutex;
    Session session;
  };

  std::shared_ptr<Entry> lookup(const std::string& id) const;
  void persist(const Session& session, std::size_t first_new_action);
  std::filesystem::path event_path(const std::string& id) const;

  std::filesystem::path data_dir_;
  mutable std::mutex map_mutex_;
  std::map<std::string, std::shared_ptr<Entry>> sessions_;
};

}  // namespace condel
