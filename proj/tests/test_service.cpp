#include <doctest.h>

#include <json.hpp>

#include "retouch/errors.hpp"
#include "retouch/service.hpp"
#include "test_support.hpp"

using namespace retouch;
using nlohmann::json;

namespace {

std::string png_of(const ImageBuffer& img) {
    const auto bytes = encode_png(img);
    return {bytes.begin(), bytes.end()};
}

struct Fixture {
    std::shared_ptr<testing::RoutedChat> chat = std::make_shared<testing::RoutedChat>(
        "Candidate 1\n" + testing::description_block("brightness 10-20% higher") + "Candidate 2\n" +
            testing::description_block("brightness 20-40% higher"),
        "adj_img = filter.exposure(0.25)");
    testing::TempDir persist;
    RetouchService service;
    int port;
    httplib::Client client;
    ImageBuffer clean = make_clean();
    ImageBuffer source = execute_program(clean, {{{FilterKind::Exposure, -0.6}, {FilterKind::Saturation, -0.5}}, ""});

    static ImageBuffer make_clean() {
        std::mt19937_64 rng(77);
        return testing::synthetic_image(rng, 48);
    }

    static ServiceOptions options(std::shared_ptr<testing::RoutedChat> chat, const testing::TempDir& dir) {
        ServiceOptions o;
        o.provider = std::make_shared<StatsProvider>();
        o.agent_factory = [chat](AgentKind kind) {
            return kind == AgentKind::Rule ? make_rule_agents() : make_chat_agents(chat, AgentBackendConfig{});
        };
        o.persist_dir = dir.path();
        return o;
    }

    Fixture()
        : service(options(chat, persist)),
          port(service.start("127.0.0.1", 0)),
          client("127.0.0.1", port) {}

    httplib::Result create(httplib::MultipartFormDataItems items) { return client.Post("/sessions", items); }

    httplib::MultipartFormDataItems reference_form() {
        httplib::MultipartFormDataItems items = {{"source", png_of(source), "source.png", "image/png"}};
        for (const auto& r : testing::same_statistics_refs(clean)) items.push_back({"refs", png_of(r), "r.png", "image/png"});
        return items;
    }
};

}  // namespace

TEST_CASE("health check") {
    Fixture f;
    const auto res = f.client.Get("/healthz");
    REQUIRE(res);
    CHECK(res->status == 200);
    CHECK(res->body == "ok");
}

TEST_CASE("reference sessions step until they stop") {
    Fixture f;
    const auto created = f.create(f.reference_form());
    REQUIRE(created);
    REQUIRE(created->status == 201);
    const auto doc = json::parse(created->body);
    const std::string id = doc["session_id"];
    CHECK(id.size() == 32);
    CHECK(doc["state"]["status"] == "running");
    CHECK(doc["state"]["n_refs"] == 5);
    CHECK(std::filesystem::exists(f.persist.path() / id / "session.json"));

    double prev = 1e300;
    std::string status = "running";
    int steps = 0;
    while (status == "running") {
        const auto res = f.client.Post("/sessions/" + id + "/step");
        REQUIRE(res);
        REQUIRE(res->status == 200);
        const auto body = json::parse(res->body);
        const auto& rec = body["iteration_record"];
        CHECK(rec["t"] == steps);
        const double score = rec["scores"][rec["selected"].get<int>()];
        CHECK(score <= prev);
        prev = score;
        status = body["status"];
        ++steps;
    }
    CHECK(steps >= 3);
    CHECK(steps <= 10);

    const auto again = f.client.Post("/sessions/" + id + "/step");
    REQUIRE(again);
    CHECK(again->status == 409);

    const auto state = json::parse(f.client.Get("/sessions/" + id)->body);
    CHECK(state["history"].size() == static_cast<std::size_t>(steps));
    const std::string url = state["history"][0]["candidates"][1]["image"];
    CHECK(url == "/sessions/" + id + "/images/t0-c1");
    const auto img = f.client.Get(url);
    REQUIRE(img);
    CHECK(img->status == 200);
    CHECK(img->get_header_value("Content-Type") == "image/png");
    const auto decoded = decode_image({reinterpret_cast<const std::uint8_t*>(img->body.data()), img->body.size()});
    CHECK(decoded.width() == 48);

    const auto program = f.client.Get("/sessions/" + id + "/program");
    REQUIRE(program);
    const auto composed = parse_program_json(program->body);
    CHECK(composed.steps.size() == state["composed_program"]["steps"].size());
    // Replaying the exported program over the uploaded source reproduces the final image.
    const auto final_png = f.client.Get("/sessions/" + id + "/images/source");
    const auto final_img =
        decode_image({reinterpret_cast<const std::uint8_t*>(final_png->body.data()), final_png->body.size()});
    const auto uploaded = decode_image(encode_png(f.source));
    CHECK(final_img == decode_image(encode_png(execute_program(uploaded, composed))));

    CHECK(f.client.Get("/sessions/" + id + "/images/t99-c0")->status == 404);
    CHECK(f.client.Post("/sessions/" + id + "/select", R"({"index":0})", "application/json")->status == 409);
}

TEST_CASE("request validation") {
    Fixture f;
    CHECK(f.client.Get("/sessions/0123456789abcdef")->status == 404);
    CHECK(f.client.Post("/sessions/0123456789abcdef/step")->status == 404);
    CHECK(f.client.Post("/sessions", "{}", "application/json")->status == 422);

    httplib::MultipartFormDataItems no_refs = {{"source", png_of(f.source), "s.png", "image/png"}};
    CHECK(f.create(no_refs)->status == 422);

    auto bad_score = f.reference_form();
    bad_score.push_back({"score", "lpips", "", ""});
    CHECK(f.create(bad_score)->status == 422);

    auto bad_iters = f.reference_form();
    bad_iters.push_back({"max_iters", "ten", "", ""});
    CHECK(f.create(bad_iters)->status == 422);

    auto zero_iters = f.reference_form();
    zero_iters.push_back({"max_iters", "0", "", ""});
    CHECK(f.create(zero_iters)->status == 422);

    httplib::MultipartFormDataItems garbage = {{"source", "not an image", "s.png", "image/png"}};
    const auto res = f.create(garbage);
    CHECK(res->status == 422);
    CHECK(json::parse(res->body).contains("error"));

    httplib::MultipartFormDataItems rule_instruction = {{"source", png_of(f.source), "s.png", "image/png"},
                                                        {"mode", "instruction", "", ""}};
    CHECK(f.create(rule_instruction)->status == 422);
}

TEST_CASE("instruction sessions wait for the user") {
    Fixture f;
    httplib::MultipartFormDataItems form = {{"source", png_of(f.source), "s.png", "image/png"},
                                            {"mode", "instruction", "", ""},
                                            {"agent", "chat", "", ""},
                                            {"n_candidates", "2", "", ""}};
    const auto created = f.create(form);
    REQUIRE(created);
    REQUIRE(created->status == 201);
    const std::string id = json::parse(created->body)["session_id"];
    const std::string base = "/sessions/" + id;

    CHECK(f.client.Post(base + "/step")->status == 409);
    CHECK(f.client.Post(base + "/instruction", R"({"text":""})", "application/json")->status == 422);
    CHECK(f.client.Post(base + "/instruction", "nope", "application/json")->status == 422);

    const auto res = f.client.Post(base + "/instruction", R"({"text":"make it brighter"})", "application/json");
    REQUIRE(res);
    REQUIRE(res->status == 200);
    const auto body = json::parse(res->body);
    CHECK(body["status"] == "awaiting_user");
    REQUIRE(body["candidates"].size() == 3);
    CHECK(body["candidates"][1]["image_url"] == base + "/images/t0-c1");
    CHECK(body["candidates"][1]["program"]["steps"][0]["filter"] == "exposure");

    CHECK(f.client.Post(base + "/instruction", R"({"text":"more"})", "application/json")->status == 409);
    CHECK(f.client.Post(base + "/select", R"({"index":7})", "application/json")->status == 422);
    CHECK(f.client.Post(base + "/select", R"({"index":"1"})", "application/json")->status == 422);

    const auto selected = f.client.Post(base + "/select", R"({"index":1})", "application/json");
    REQUIRE(selected);
    REQUIRE(selected->status == 200);
    const auto state = json::parse(selected->body)["state"];
    CHECK(state["status"] == "running");
    CHECK(state["history"][0]["selected"] == 1);
    CHECK(state["history"][0]["selection_source"] == "user");
    CHECK(state["history"][0]["instruction"] == "make it brighter");
    CHECK(parse_program_json(f.client.Get(base + "/program")->body).steps.size() == 1);
    CHECK(f.client.Post(base + "/select", R"({"index":1})", "application/json")->status == 409);
}

TEST_CASE("agent failures are retryable") {
    auto silent = std::make_shared<testing::RoutedChat>("I cannot tell.", "print(1)");
    testing::TempDir dir;
    auto options = Fixture::options(silent, dir);
    RetouchService service(std::move(options));
    httplib::Client client("127.0.0.1", service.start("127.0.0.1", 0));
    std::mt19937_64 rng(3);
    httplib::MultipartFormDataItems form = {{"source", png_of(testing::random_image(rng, 16, 16)), "s.png", "image/png"},
                                            {"mode", "instruction", "", ""},
                                            {"agent", "chat", "", ""}};
    const auto created = client.Post("/sessions", form);
    REQUIRE(created->status == 201);
    const std::string id = json::parse(created->body)["session_id"];
    const auto res = client.Post("/sessions/" + id + "/instruction", R"({"text":"warmer"})", "application/json");
    REQUIRE(res);
    CHECK(res->status == 502);
    CHECK(json::parse(res->body)["retryable"] == true);
    CHECK(json::parse(client.Get("/sessions/" + id)->body)["status"] == "running");
}

TEST_CASE("concurrent steps on one session are serialized") {
    Fixture f;
    auto form = f.reference_form();
    form.push_back({"warm_start", "false", "", ""});
    const std::string id = json::parse(f.create(form)->body)["session_id"];
    std::vector<int> codes(4);
    std::vector<std::thread> threads;
    for (int i = 0; i < 4; ++i) {
        threads.emplace_back([&, i] {
            httplib::Client c("127.0.0.1", f.port);
            c.set_read_timeout(std::chrono::seconds(60));
            codes[i] = c.Post("/sessions/" + id + "/step")->status;
        });
    }
    for (auto& t : threads) t.join();
    const auto state = json::parse(f.client.Get("/sessions/" + id)->body);
    int ok = 0;
    for (int c : codes) ok += c == 200;
    CHECK(ok == static_cast<int>(state["history"].size()));
    for (std::size_t t = 0; t < state["history"].size(); ++t) CHECK(state["history"][t]["t"] == t);
}
