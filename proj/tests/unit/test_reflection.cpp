#include <gtest/gtest.h>

#include <httplib.h>

#include <chrono>
#include <fstream>
#include <json.hpp>
#include <thread>

#include "helpers.hpp"
#include "p2o/error.hpp"
#include "p2o/reflection.hpp"

using namespace p2o;
namespace th = testing_helpers;

namespace {

struct Forcing {
  static constexpr int V = 4, L = 3, d = 12;
  PolicyParams scorer = th::readout_policy(V, L, d);
  TemplateSpace space = th::forcing_space(V, L, d, 5.0);
};

FeedbackBundle bundle_for(const Tokens& target, int copies = 2) {
  FeedbackBundle b;
  for (int i = 0; i < copies; ++i) b.items.push_back({Vector(12, 0.0), Tokens{0, 0, 0}, target});
  return b;
}

std::string write_script(const std::string& dir, const std::string& name, const std::string& body) {
  const std::string path = dir + "/" + name;
  std::ofstream(path) << body;
  return "/bin/sh " + path;
}

}  // namespace

TEST(Reflection, FeedbackGuidedFindsForcingGenome) {
  Forcing f;
  const FeedbackGuidedReflector r(f.scorer, f.space, 16);
  const Tokens target{2, 0, 3};
  Rng rng(1);
  const Template z = r.propose(f.space.empty(), bundle_for(target), rng);
  ASSERT_TRUE(z.genome());
  EXPECT_EQ(*z.genome(), th::forcing_genome(target));
}

TEST(Reflection, FeedbackGuidedIncreasesMargin) {
  EnvConfig env;
  env.n_hard = 8;
  const auto data = make_dataset(env);
  const TemplateSpace space(env);
  const PolicyParams scorer = th::random_policy(8, 4, 16, 6, 0.3);
  FeedbackBundle fb;
  for (const Sample& s : data) fb.items.push_back({s.features, Tokens(4, 0), s.target});
  const FeedbackGuidedReflector r(scorer, space, 4);
  Rng rng(1);
  const Tokens start(8, 0);
  const Template z = r.propose(space.empty(), fb, rng);
  EXPECT_GT(r.summed_margin(*z.genome(), fb), r.summed_margin(start, fb));
  // One step changes at most one slot.
  const FeedbackGuidedReflector one(scorer, space, 1);
  const Template z1 = one.propose(space.empty(), fb, rng);
  int changed = 0;
  for (int p = 0; p < 8; ++p) changed += (*z1.genome())[p] != 0;
  EXPECT_LE(changed, 1);
}

TEST(Reflection, EmptyFeedbackReturnsParent) {
  Forcing f;
  const FeedbackGuidedReflector r(f.scorer, f.space, 4);
  Rng rng(1);
  const Template parent = f.space.make({1, 2, 3});
  EXPECT_EQ(r.propose(parent, FeedbackBundle{}, rng), parent);
}

TEST(Reflection, BadConstruction) {
  Forcing f;
  EXPECT_THROW(FeedbackGuidedReflector(f.scorer, f.space, 0), ConfigError);
  const PolicyParams other(4, 3, 5);
  EXPECT_THROW(FeedbackGuidedReflector(other, f.space, 4), ConfigError);
}

TEST(Reflection, RandomMutationChangesExactlyOneSlot) {
  Forcing f;
  const RandomMutationReflector r(f.space);
  Rng rng(4);
  const Template parent = f.space.make({1, 2, 3});
  for (int i = 0; i < 50; ++i) {
    const Template c = r.propose(parent, FeedbackBundle{}, rng);
    int diff = 0;
    for (int p = 0; p < 3; ++p) diff += (*c.genome())[p] != (*parent.genome())[p];
    EXPECT_EQ(diff, 1);
  }
  const Template from_empty = r.propose(f.space.empty(), FeedbackBundle{}, rng);
  EXPECT_TRUE(from_empty.genome());
}

TEST(Reflection, WireFormat) {
  Forcing f;
  FeedbackBundle fb;
  fb.items.push_back({Vector{0.5, -1.0}, Tokens{1, 2, 3}, Tokens{0, 2, 3}});
  const auto req = nlohmann::json::parse(encode_reflection_request(f.space.empty(), fb));
  EXPECT_EQ(req["template"], "empty");
  EXPECT_EQ(req["feedback"][0]["prediction"], (std::vector<int>{1, 2, 3}));
  EXPECT_EQ(req["feedback"][0]["target"], (std::vector<int>{0, 2, 3}));
  const std::string line = encode_reflection_request(f.space.make({1, 0, 4}), fb);
  EXPECT_EQ(line.find('\n'), std::string::npos);
  EXPECT_EQ(nlohmann::json::parse(line)["template"], (std::vector<int>{1, 0, 4}));

  EXPECT_EQ(*decode_reflection_response(R"({"template":[1,2,3]})", f.space).genome(), (Tokens{1, 2, 3}));
  EXPECT_TRUE(decode_reflection_response(R"({"template":"empty"})", f.space).is_empty());
  EXPECT_THROW(decode_reflection_response("nope", f.space), ParseError);
  EXPECT_THROW(decode_reflection_response(R"({"genome":[1]})", f.space), ParseError);
  EXPECT_THROW(decode_reflection_response(R"({"template":[1,2]})", f.space), ParseError);
  EXPECT_THROW(decode_reflection_response(R"({"template":[1,2,9]})", f.space), ParseError);
  EXPECT_THROW(decode_reflection_response(R"({"template":[1,"a",2]})", f.space), ParseError);
}

TEST(Reflection, SubprocessRoundTrip) {
  Forcing f;
  const std::string dir = th::temp_dir("reflect_sub");
  const std::string cmd =
      write_script(dir, "ok.sh", "cat > " + dir + "/request.json\necho '{\"template\":[3,1,4]}'\n");
  ExternalReflectorConfig cfg;
  cfg.command = cmd;
  const ExternalReflector r(cfg, f.space);
  Rng rng(1);
  const Template z = r.propose(f.space.empty(), bundle_for({2, 0, 3}, 1), rng);
  EXPECT_EQ(*z.genome(), (Tokens{3, 1, 4}));
  const auto req = nlohmann::json::parse(th::slurp(dir + "/request.json"));
  EXPECT_EQ(req["template"], "empty");
  EXPECT_EQ(req["feedback"].size(), 1u);
}

TEST(Reflection, SubprocessTimeoutAndMalformed) {
  Forcing f;
  const std::string dir = th::temp_dir("reflect_bad");
  Rng rng(1);
  ExternalReflectorConfig cfg;
  cfg.command = write_script(dir, "slow.sh", "sleep 10\n");
  cfg.timeout_ms = 200;
  const auto t0 = std::chrono::steady_clock::now();
  EXPECT_THROW(ExternalReflector(cfg, f.space).propose(f.space.empty(), bundle_for({1, 1, 1}), rng), ExternalError);
  EXPECT_LT(std::chrono::steady_clock::now() - t0, std::chrono::seconds(5));

  cfg.timeout_ms = 5000;
  cfg.command = write_script(dir, "junk.sh", "echo 'not json'\n");
  EXPECT_THROW(ExternalReflector(cfg, f.space).propose(f.space.empty(), bundle_for({1, 1, 1}), rng), ParseError);
  cfg.command = write_script(dir, "silent.sh", "exit 0\n");
  EXPECT_THROW(ExternalReflector(cfg, f.space).propose(f.space.empty(), bundle_for({1, 1, 1}), rng), ExternalError);

  ExternalReflectorConfig neither;
  EXPECT_THROW(ExternalReflector(neither, f.space), ConfigError);
  ExternalReflectorConfig both;
  both.command = "true";
  both.url = "http://127.0.0.1:1";
  EXPECT_THROW(ExternalReflector(both, f.space), ConfigError);
}

TEST(Reflection, HttpRoundTrip) {
  Forcing f;
  httplib::Server server;
  std::string seen;
  server.Post("/reflect", [&](const httplib::Request& req, httplib::Response& res) {
    seen = req.body;
    res.set_content(R"({"template":[0,4,2]})", "application/json");
  });
  server.Post("/broken", [](const httplib::Request&, httplib::Response& res) { res.status = 500; });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread worker([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  ExternalReflectorConfig cfg;
  cfg.url = "http://127.0.0.1:" + std::to_string(port);
  Rng rng(1);
  const Template z = ExternalReflector(cfg, f.space).propose(f.space.make({1, 1, 1}), bundle_for({2, 0, 3}), rng);
  EXPECT_EQ(*z.genome(), (Tokens{0, 4, 2}));
  EXPECT_EQ(nlohmann::json::parse(seen)["template"], (std::vector<int>{1, 1, 1}));

  cfg.path = "/broken";
  EXPECT_THROW(ExternalReflector(cfg, f.space).propose(f.space.empty(), bundle_for({2, 0, 3}), rng), ExternalError);
  server.stop();
  worker.join();

  cfg.path = "/reflect";
  cfg.timeout_ms = 300;
  EXPECT_THROW(ExternalReflector(cfg, f.space).propose(f.space.empty(), bundle_for({2, 0, 3}), rng), ExternalError);
}
