#include <gtest/gtest.h>

#include <filesystem>
#include <thread>

#include <unistd.h>

#include "vdl/http_server.hpp"
#include "vdl/session_service.hpp"

using namespace vdl;
namespace fs = std::filesystem;

namespace {

class ServiceTest : public ::testing::Test {
 protected:
  void SetUp() override {
    root_ = fs::temp_directory_path() / ("vdl_service_" + std::to_string(::getpid()) + "_" +
                                         ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(root_);
    fs::create_directories(root_ / "data");
    truth_ = synthesize(400, 6, 0.1, 3);
    write_csv(truth_, (root_ / "data" / "pool.csv").string());
  }
  void TearDown() override { fs::remove_all(root_); }

  SessionService service() { return SessionService(root_ / "state", root_ / "data"); }

  json create_body(const std::string& strategy = "learned-surrogate") const {
    return {{"dataset", "pool.csv"}, {"strategy", strategy}, {"k", 8}, {"t", 4}, {"seed", 5}};
  }

  /// The test plays the human: answers from the ground truth it wrote itself.
  json answers(const json& display) const {
    json labels = json::object();
    for (const json& item : display["items"]) {
      const SampleId id = item["sample_id"].get<SampleId>();
      labels[std::to_string(id)] = to_int(*truth_.sample(truth_.index_of(id)).label);
    }
    return {{"labels", labels}};
  }

  fs::path root_;
  Pool truth_;
};

int status_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const ServiceError& e) {
    return e.status();
  }
  return 200;
}

}  // namespace

TEST_F(ServiceTest, CreateAndReadDisplay) {
  auto svc = service();
  const std::string id = svc.create_session(create_body());
  const json d = svc.get_display(id);
  EXPECT_EQ(d["items"].size(), 8u);
  EXPECT_EQ(d["t"], 0);
  EXPECT_EQ(d["T"], 4);
  EXPECT_EQ(svc.get_display(id), d);
  for (const json& item : d["items"]) {
    EXPECT_TRUE(item.contains("thumbnail_before"));
    EXPECT_LE(item["feature_preview"].size(), 8u);
    EXPECT_FALSE(item.contains("label"));
  }
  EXPECT_TRUE(fs::exists(svc.session_file(id)));
  EXPECT_EQ(svc.get_metrics(id).size(), 0u);
}

TEST_F(ServiceTest, SameSeedSameFirstDisplay) {
  auto svc = service();
  const auto a = svc.get_display(svc.create_session(create_body()))["items"];
  const auto b = svc.get_display(svc.create_session(create_body()))["items"];
  EXPECT_EQ(a, b);
}

TEST_F(ServiceTest, CreateErrors) {
  auto svc = service();
  json missing = create_body();
  missing["dataset"] = "nope.csv";
  EXPECT_EQ(status_of([&] { svc.create_session(missing); }), 404);
  try {
    svc.create_session(create_body("foo"));
    FAIL();
  } catch (const ServiceError& e) {
    EXPECT_EQ(e.status(), 422);
    EXPECT_NE(std::string(e.what()).find("learned-surrogate"), std::string::npos);
  }
  json big = create_body();
  big["k"] = 100;
  EXPECT_EQ(status_of([&] { svc.create_session(big); }), 422);
  json bad = create_body();
  bad["hyperparameters"] = {{"rho", -1.0}};
  EXPECT_EQ(status_of([&] { svc.create_session(bad); }), 422);
  EXPECT_EQ(status_of([&] { svc.get_display("missing"); }), 404);
  EXPECT_EQ(status_of([&] { svc.get_metrics("missing"); }), 404);
}

TEST_F(ServiceTest, SubmitAdvancesAndRejectsBadCovers) {
  auto svc = service();
  const std::string id = svc.create_session(create_body());
  const json d0 = svc.get_display(id);
  json full = answers(d0);

  json partial = full;
  partial["labels"].erase(partial["labels"].begin());
  EXPECT_EQ(status_of([&] { svc.submit_labels(id, partial); }), 422);
  json extra = full;
  extra["labels"]["999999"] = 1;
  EXPECT_EQ(status_of([&] { svc.submit_labels(id, extra); }), 422);
  json wrong_value = full;
  wrong_value["labels"].begin().value() = 0;
  EXPECT_EQ(status_of([&] { svc.submit_labels(id, wrong_value); }), 422);
  json dup = {{"labels", json::array()}};
  for (const json& item : d0["items"]) dup["labels"].push_back({{"sample_id", item["sample_id"]}, {"label", 1}});
  dup["labels"].push_back(dup["labels"][0]);
  EXPECT_EQ(status_of([&] { svc.submit_labels(id, dup); }), 422);
  EXPECT_EQ(svc.record(id).state.t, 0u) << "rejections leave state unchanged";

  const json r = svc.submit_labels(id, full);
  EXPECT_EQ(r["t"], 1);
  EXPECT_TRUE(r["next_display_ready"].get<bool>());
  EXPECT_EQ(svc.get_metrics(id).size(), 1u);
  EXPECT_EQ(status_of([&] { svc.submit_labels(id, full); }), 409);
  EXPECT_NE(svc.get_display(id)["items"], d0["items"]);
}

TEST_F(ServiceTest, CompleteSessionConflicts) {
  auto svc = service();
  const std::string id = svc.create_session(create_body("random"));
  json last;
  for (int t = 0; t < 4; ++t) last = svc.submit_labels(id, answers(svc.get_display(id)));
  EXPECT_EQ(last["t"], 4);
  EXPECT_FALSE(last["next_display_ready"].get<bool>());
  EXPECT_EQ(status_of([&] { svc.get_display(id); }), 409);
  EXPECT_EQ(status_of([&] { svc.submit_labels(id, json{{"labels", json::object()}}); }), 409);
  const json m = svc.get_metrics(id);
  ASSERT_EQ(m.size(), 4u);
  EXPECT_DOUBLE_EQ(m[3]["sampling_percent"].get<double>(), sampling_percent(4, 8, 400));
}

TEST_F(ServiceTest, RestartResumesIdentically) {
  std::vector<json> uninterrupted, resumed;
  std::string id_a, id_b;
  {
    auto svc = service();
    id_a = svc.create_session(create_body());
    for (int t = 0; t < 4; ++t) {
      const json d = svc.get_display(id_a);
      uninterrupted.push_back(d["items"]);
      svc.submit_labels(id_a, answers(d));
    }
    id_b = svc.create_session(create_body());
    for (int t = 0; t < 2; ++t) {
      const json d = svc.get_display(id_b);
      resumed.push_back(d["items"]);
      svc.submit_labels(id_b, answers(d));
    }
  }
  auto restarted = service();
  for (int t = 2; t < 4; ++t) {
    const json d = restarted.get_display(id_b);
    resumed.push_back(d["items"]);
    restarted.submit_labels(id_b, answers(d));
  }
  EXPECT_EQ(uninterrupted, resumed);
  EXPECT_EQ(restarted.get_metrics(id_b), restarted.get_metrics(id_a));
}

TEST_F(ServiceTest, ChangedDatasetIsDetectedOnReload) {
  std::string id;
  {
    auto svc = service();
    id = svc.create_session(create_body());
  }
  write_csv(synthesize(400, 6, 0.1, 4), (root_ / "data" / "pool.csv").string());
  auto svc = service();
  EXPECT_EQ(status_of([&] { svc.get_display(id); }), 409);
}

TEST_F(ServiceTest, NoEvalLabelLeaks) {
  auto svc = service();
  const std::string id = svc.create_session(create_body());
  const Pool split = split_half(truth_, 5);
  std::set<SampleId> eval_ids;
  for (std::size_t i : split.indices(Split::eval)) eval_ids.insert(split.id(i));
  for (int t = 0; t < 4; ++t) {
    const json d = svc.get_display(id);
    for (const json& item : d["items"]) {
      EXPECT_EQ(eval_ids.count(item["sample_id"].get<SampleId>()), 0u);
      EXPECT_FALSE(item.contains("label"));
    }
    const json r = svc.submit_labels(id, answers(d));
    EXPECT_FALSE(r.contains("labels"));
  }
  for (const json& m : svc.get_metrics(id)) EXPECT_EQ(m.size(), 3u);
}

TEST_F(ServiceTest, HttpRoundTrip) {
  SessionService svc(root_ / "state", root_ / "data", root_ / "data");
  httplib::Server server;
  mount_routes(server, svc);
  const int port = server.bind_to_any_port("127.0.0.1");
  ASSERT_GT(port, 0);
  std::thread th([&] { server.listen_after_bind(); });
  server.wait_until_ready();
  httplib::Client cli("127.0.0.1", port);

  auto created = cli.Post("/sessions", create_body().dump(), "application/json");
  ASSERT_TRUE(created);
  EXPECT_EQ(created->status, 201);
  const std::string id = json::parse(created->body)["session_id"];

  auto display = cli.Get("/sessions/" + id + "/display");
  ASSERT_TRUE(display);
  EXPECT_EQ(display->status, 200);
  const json d = json::parse(display->body);
  EXPECT_EQ(d["items"].size(), 8u);

  auto metrics0 = cli.Get("/sessions/" + id + "/metrics");
  EXPECT_EQ(json::parse(metrics0->body).size(), 0u);

  json partial = answers(d);
  partial["labels"].erase(partial["labels"].begin());
  auto rejected = cli.Post("/sessions/" + id + "/labels", partial.dump(), "application/json");
  EXPECT_EQ(rejected->status, 422);
  EXPECT_EQ(json::parse(rejected->body)["code"], 422);

  auto ok = cli.Post("/sessions/" + id + "/labels", answers(d).dump(), "application/json");
  EXPECT_EQ(ok->status, 200);
  EXPECT_EQ(json::parse(ok->body)["t"], 1);
  auto again = cli.Post("/sessions/" + id + "/labels", answers(d).dump(), "application/json");
  EXPECT_EQ(again->status, 409);

  auto bad = cli.Post("/sessions", create_body("foo").dump(), "application/json");
  EXPECT_EQ(bad->status, 422);
  EXPECT_NE(json::parse(bad->body)["message"].get<std::string>().find("maxmin"), std::string::npos);
  auto malformed = cli.Post("/sessions", "{not json", "application/json");
  EXPECT_EQ(malformed->status, 400);
  auto unknown = cli.Get("/sessions/zzz/display");
  EXPECT_EQ(unknown->status, 404);
  EXPECT_EQ(json::parse(unknown->body)["code"], 404);
  auto asset = cli.Get("/assets/pool.csv");
  EXPECT_EQ(asset->status, 200);
  auto nowhere = cli.Get("/nowhere");
  EXPECT_EQ(nowhere->status, 404);

  server.stop();
  th.join();
}
