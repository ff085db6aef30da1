#include <atomic>
#include <filesystem>
#include <thread>

#include "condel/cli.hpp"
#include "condel/server.hpp"
#include "doctest.h"
#include "httplib.h"
#include "json.hpp"
#include "support/fixtures.hpp"

using namespace condel;
using nlohmann::json;

namespace {

// In-process server on a free port with a clock that advances one second per
// reading.
class LiveServer {
 public:
  explicit LiveServer(const std::string& tag, ServerConfig config = {}, std::vector<Corpus> corpora = {})
      : dir_(testing::scratch_dir(tag)) {
    config.data_dir = dir_;
    config.min_rules = 2;
    if (corpora.empty()) corpora.push_back(testing::load_f1());
    server_ = std::make_unique<Server>(config, std::move(corpora), [this] {
      return from_millis(1'700'000'000'000 + 1000 * ticks_.fetch_add(1));
    });
    port_ = server_->bind("127.0.0.1", 0);
    thread_ = std::thread([this] { server_->listen(); });
    client_ = std::make_unique<httplib::Client>("127.0.0.1", port_);
    client_->set_connection_timeout(5);
  }

  ~LiveServer() {
    server_->stop();
    thread_.join();
    std::filesystem::remove_all(dir_);
  }

  httplib::Client& http() { return *client_; }
  Server& server() { return *server_; }
  const std::filesystem::path& dir() const { return dir_; }

  std::string start(const std::string& condition) {
    auto res = client_->Post("/api/session", json{{"condition", condition}}.dump(), "application/json");
    REQUIRE(res);
    REQUIRE(res->status == 201);
    return json::parse(res->body)["session_id"].get<std::string>();
  }

 private:
  std::filesystem::path dir_;
  std::atomic<std::int64_t> ticks_{0};
  std::unique_ptr<Server> server_;
  int port_ = 0;
  std::thread thread_;
  std::unique_ptr<httplib::Client> client_;
};

json body_of(const httplib::Result& res) {
  REQUIRE(res);
  return json::parse(res->body);
}

std::size_t logged_actions(Server& server, const std::string& id) {
  return server.sessions().with_session(id, [](Session& s) { return s.actions().size(); });
}

// Every key anywhere in a JSON document.
void collect_keys(const json& doc, std::set<std::string>& keys) {
  if (doc.is_object()) {
    for (const auto& [key, value] : doc.items()) {
      keys.insert(key);
      collect_keys(value, keys);
    }
  } else if (doc.is_array()) {
    for (const auto& value : doc) collect_keys(value, keys);
  }
}

}  // namespace

TEST_CASE("server: search with labels shows predicted labels") {
  LiveServer live("srv-search");
  auto id = live.start("labels");
  auto res = live.http().Get("/api/search?session=" + id + "&q=idiot&filter=toxic&page=0");
  REQUIRE(res);
  CHECK(res->status == 200);
  auto doc = json::parse(res->body);
  CHECK(doc["total"] == 1);
  REQUIRE(doc["items"].size() == 1);
  CHECK(doc["items"][0]["id"] == "c1");
  CHECK(doc["items"][0]["text"] == "you are a fucking idiot");
  CHECK(doc["items"][0]["pred"] == "toxic");
  CHECK_FALSE(doc["items"][0].contains("rationale"));

  auto local = live.start("labels_local");
  doc = body_of(live.http().Get("/api/search?session=" + local + "&q=idiot&filter=toxic"));
  CHECK(doc["items"][0]["rationale"] == json::parse("[[10,17],[18,23]]"));

  // the session can also come from a header
  doc = body_of(live.http().Get("/api/search?q=fucking", {{"X-Session-Id", id}}));
  CHECK(doc["total"] == 2);
}

TEST_CASE("server: manual condition responses carry no model output") {
  LiveServer live("srv-manual");
  auto res = live.http().Post("/api/session", R"({"condition":"manual"})", "application/json");
  REQUIRE(res);
  auto start = json::parse(res->body);
  CHECK(start["mode"] == "report_all");
  auto id = start["session_id"].get<std::string>();

  std::vector<json> docs{start};
  docs.push_back(body_of(live.http().Get("/api/search?session=" + id + "&q=idiot&page=0")));
  docs.push_back(body_of(live.http().Get("/api/random?session=" + id + "&k=6&seed=1")));
  docs.push_back(body_of(live.http().Post("/api/rules?session=" + id, R"({"keyword":"idiot"})", "application/json")));
  docs.push_back(body_of(live.http().Get("/api/rules?session=" + id)));
  docs.push_back(body_of(live.http().Get("/api/session?session=" + id)));
  CHECK(docs[1]["items"].size() == 3);
  CHECK(docs[2]["items"].size() == 6);

  std::set<std::string> keys;
  for (const auto& doc : docs) collect_keys(doc, keys);
  for (const char* field : {"pred", "prob", "rationale", "global_explanations", "predicted_toxic_matched", "gold"}) {
    CHECK_MESSAGE(keys.count(field) == 0, field);
  }

  auto filtered = live.http().Get("/api/search?session=" + id + "&q=idiot&filter=toxic");
  REQUIRE(filtered);
  CHECK(filtered->status == 422);
  CHECK(json::parse(filtered->body)["field"] == "filter");
}

TEST_CASE("server: global explanations only in the full condition") {
  LiveServer live("srv-global");
  auto res = live.http().Post("/api/session", R"({"condition":"labels_local_global"})", "application/json");
  auto doc = body_of(res);
  REQUIRE(doc.contains("global_explanations"));
  CHECK(doc["global_explanations"][0] == json{{"token", "fucking"}, {"frequency", 2}});
  CHECK(doc["global_explanations"].size() == 3);

  doc = body_of(live.http().Post("/api/session", R"({"condition":"labels_local"})", "application/json"));
  CHECK_FALSE(doc.contains("global_explanations"));
}

TEST_CASE("server: rule errors and status codes") {
  LiveServer live("srv-errors");
  auto id = live.start("labels");
  auto res = live.http().Post("/api/rules?session=" + id, R"({"keyword":"go away"})", "application/json");
  REQUIRE(res);
  CHECK(res->status == 422);
  auto doc = json::parse(res->body);
  CHECK(doc["error"] == "multi-token keyword");
  CHECK(doc["field"] == "keyword");

  res = live.http().Post("/api/rules?session=" + id, R"({"keyword":"Idiot"})", "application/json");
  REQUIRE(res);
  CHECK(res->status == 201);
  doc = json::parse(res->body);
  CHECK(doc["keyword"] == "idiot");
  CHECK(doc["total_matched"] == 3);
  CHECK(doc["predicted_toxic_matched"] == 1);

  res = live.http().Post("/api/rules?session=" + id, R"({"keyword":"idiot"})", "application/json");
  REQUIRE(res);
  CHECK(res->status == 409);
  CHECK(json::parse(res->body)["error"] == "duplicate rule");

  res = live.http().Delete("/api/rules/zebra?session=" + id);
  REQUIRE(res);
  CHECK(res->status == 404);

  res = live.http().Get("/api/search?session=" + id + "&q=go%20away");
  REQUIRE(res);
  CHECK(res->status == 422);
  CHECK(json::parse(res->body)["field"] == "q");

  res = live.http().Get("/api/search?session=nope&q=idiot");
  REQUIRE(res);
  CHECK(res->status == 404);

  res = live.http().Post("/api/finish?session=" + id, "", "application/json");
  REQUIRE(res);
  CHECK(res->status == 409);
  CHECK(json::parse(res->body)["field"] == "rules");

  res = live.http().Get("/api/evaluate?session=" + id);
  REQUIRE(res);
  CHECK(res->status == 403);

  res = live.http().Post("/api/session", R"({"condition":"oracle"})", "application/json");
  REQUIRE(res);
  CHECK(res->status == 422);
}

TEST_CASE("server: every logged request appends exactly one record") {
  LiveServer live("srv-count");
  auto id = live.start("labels_local_global");
  const std::string s = "?session=" + id;
  std::size_t logged_requests = 0;
  auto expect = [&](const httplib::Result& res, int status) {
    REQUIRE(res);
    CHECK(res->status == status);
    if (res->status < 300) ++logged_requests;
    CHECK(logged_actions(live.server(), id) == logged_requests);
  };

  expect(live.http().Get("/api/search" + s + "&q=idiot"), 200);
  expect(live.http().Get("/api/search" + s + "&q=idiot&page=1&page_size=2"), 200);
  expect(live.http().Get("/api/search" + s + "&q=idiot&filter=nontoxic&kind=filter_nontoxic"), 200);
  expect(live.http().Get("/api/random" + s + "&k=3&seed=4"), 200);
  expect(live.http().Post("/api/rules" + s, R"({"keyword":"idiot"})", "application/json"), 201);
  expect(live.http().Post("/api/rules" + s, R"({"keyword":"fuck"})", "application/json"), 201);
  expect(live.http().Post("/api/rules" + s, R"({"keyword":"great"})", "application/json"), 201);
  expect(live.http().Delete("/api/rules/great" + s), 200);
  expect(live.http().Post("/api/actions" + s, R"({"kind":"view_instructions"})", "application/json"), 201);
  expect(live.http().Post("/api/actions" + s, R"({"kind":"click_global_token","payload":"fucking"})", "application/json"), 201);
  // rejected requests leave the log alone
  expect(live.http().Post("/api/rules" + s, R"({"keyword":"idiot"})", "application/json"), 409);
  expect(live.http().Post("/api/actions" + s, R"({"kind":"search"})", "application/json"), 422);
  expect(live.http().Get("/api/search" + s + "&q=go%20away"), 422);
  // bookkeeping reads are not logged
  auto before = logged_actions(live.server(), id);
  CHECK(live.http().Get("/api/rules" + s)->status == 200);
  CHECK(live.http().Get("/api/session" + s)->status == 200);
  CHECK(live.http().Get("/api/health")->status == 200);
  CHECK(logged_actions(live.server(), id) == before);

  auto res = live.http().Post("/api/finish" + s, "", "application/json");
  expect(res, 200);
  auto doc = json::parse(res->body);
  CHECK(doc["result"]["n_actions"] == logged_requests);
  CHECK(doc["result"]["n_rules"] == 2);
  CHECK(doc["evaluation"]["mode"] == "delegation");
  CHECK(doc["evaluation"]["union_precision"] == 1.0);
  CHECK(doc["evaluation"]["reward"] == 2);
  CHECK(doc["bonus_usd"] == 0.0);

  // the persisted log agrees with the in-memory one
  auto loaded = SessionStore::load(live.dir() / (id + ".jsonl"));
  CHECK(loaded.actions().size() == logged_requests);
  CHECK(loaded.finished());
  CHECK(std::filesystem::exists(live.dir() / (id + ".json")));

  res = live.http().Get("/api/evaluate" + s);
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(json::parse(res->body)["evaluation"]["reward"] == 2);

  res = live.http().Post("/api/rules" + s, R"({"keyword":"the"})", "application/json");
  REQUIRE(res);
  CHECK(res->status == 409);
}

TEST_CASE("server: gold labels never reach session endpoints") {
  LiveServer live("srv-gold");
  for (const char* condition : {"manual", "labels", "labels_local", "labels_local_global"}) {
    auto id = live.start(condition);
    const std::string s = "?session=" + id;
    std::vector<std::string> bodies;
    for (const char* word : {"idiot", "fucking", "fuck", "great", "the", "a"}) {
      bodies.push_back(live.http().Get("/api/search" + s + "&q=" + word)->body);
      bodies.push_back(live.http().Post("/api/rules" + s, json{{"keyword", word}}.dump(), "application/json")->body);
    }
    bodies.push_back(live.http().Get("/api/random" + s + "&k=10")->body);
    bodies.push_back(live.http().Get("/api/rules" + s)->body);
    for (const auto& body : bodies) {
      std::set<std::string> keys;
      collect_keys(json::parse(body), keys);
      CHECK(keys.count("gold") == 0);
      CHECK(keys.count("prob") == 0);
    }
  }
}

TEST_CASE("server: CORS and health") {
  ServerConfig config;
  config.cors_allowlist = {"http://localhost:5173"};
  LiveServer live("srv-cors", config);
  auto res = live.http().Get("/api/health", {{"Origin", "http://localhost:5173"}});
  REQUIRE(res);
  CHECK(res->get_header_value("Access-Control-Allow-Origin") == "http://localhost:5173");
  auto doc = json::parse(res->body);
  CHECK(doc["status"] == "ok");
  CHECK(doc["corpora"][0]["name"] == "f1");

  res = live.http().Get("/api/health", {{"Origin", "http://evil.example"}});
  REQUIRE(res);
  CHECK_FALSE(res->has_header("Access-Control-Allow-Origin"));
}

TEST_CASE("server: two corpora and per-session corpus choice") {
  auto f1 = testing::load_f1();
  auto other = testing::load_f1();
  other.name = "f1b";
  other.comments[1].gold = Label::toxic;
  LiveServer live("srv-two", {}, {f1, other});
  auto doc = body_of(live.http().Post("/api/session", R"({"condition":"labels","corpus":"f1b"})", "application/json"));
  CHECK(doc["corpus"] == "f1b");
  auto res = live.http().Post("/api/session", R"({"corpus":"missing"})", "application/json");
  REQUIRE(res);
  CHECK(res->status == 404);
}

TEST_CASE("server config parsing") {
  auto config = parse_server_config(R"({
    "port": 9000,
    "corpora": ["a.jsonl", {"path": "b.jsonl", "name": "ood", "predictions": "b.preds.jsonl"}],
    "data_dir": "out",
    "default_condition": "labels",
    "cors_allowlist": ["*"]
  })", "/srv/cfg");
  CHECK(config.port == 9000);
  REQUIRE(config.corpora.size() == 2);
  CHECK(config.corpora[0].path == "/srv/cfg/a.jsonl");
  CHECK(config.corpora[1].name == "ood");
  CHECK(config.corpora[1].predictions == std::filesystem::path("/srv/cfg/b.preds.jsonl"));
  CHECK(config.data_dir == "/srv/cfg/out");
  CHECK(config.default_condition == Condition::labels);
  CHECK_THROWS(parse_server_config(R"({"corpora": []})"));
  CHECK_THROWS(parse_server_config(R"({"corpora": ["a"], "default_condition": "oracle"})"));
}

TEST_CASE("server: finish evaluation matches the command line") {
  LiveServer live("srv-cli");
  for (const char* condition : {"labels", "manual"}) {
    auto id = live.start(condition);
    const std::string s = "?session=" + id;
    for (const char* word : {"idiot", "fucking", "zebra"}) {
      REQUIRE(live.http().Post("/api/rules" + s, json{{"keyword", word}}.dump(), "application/json")->status == 201);
    }
    auto res = live.http().Post("/api/finish" + s, "", "application/json");
    REQUIRE(res);
    auto finished = nlohmann::ordered_json::parse(res->body);

    const std::string mode = condition == std::string("manual") ? "report_all" : "delegation";
    std::ostringstream out, err;
    const std::string rules = R"({"mode":")" + mode + R"(","rules":["idiot","fucking","zebra"]})";
    REQUIRE(run_cli({"evaluate", testing::data_path("f1.jsonl").string(), "--rules", rules}, out, err) == 0);
    auto from_cli = nlohmann::ordered_json::parse(out.str());
    const auto& from_server = finished["evaluation"];
    CHECK(from_cli.dump() == nlohmann::ordered_json::parse(
                                 live.http().Get("/api/evaluate" + s)->body)["evaluation"].dump());
    CHECK(from_cli.dump() == from_server.dump());
  }
}
