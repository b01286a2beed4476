#include <gtest/gtest.h>

#include <chrono>
#include <fstream>
#include <httplib.h>

#include "c3det/core/dataset.hpp"
#include "c3det/server.hpp"
#include "helpers.hpp"

using namespace c3det;
using nlohmann::json;

namespace {

struct Fixture {
    std::filesystem::path root;
    std::filesystem::path ckpt;
};

Fixture make_fixture(const std::string& tag) {
    Fixture f;
    f.root = testutil::temp_dir(tag);
    const ClassCatalog cat({"a", "b", "c"});
    save_meta(f.root, DatasetMeta{cat, 64, 64});
    RandomSource rng(1, "srv");
    std::vector<LabeledImage> imgs;
    for (int i = 0; i < 2; ++i) {
        auto img = testutil::random_scene(rng, 64, 64, 3, 4, "test_0000" + std::to_string(i));
        for (auto& v : img.pixels.data) v = static_cast<float>(rng.uniform());
        imgs.push_back(img);
    }
    save_dataset(f.root, Split::Test, imgs);
    ModelConfig m = ModelConfig::profile("desk");
    m.backbone_channels = 8;
    m.lf_channels = 4;
    m.fusion_proj_channels = 8;
    m.head_channels = 8;
    Detector d(m, cat, 2);
    f.ckpt = f.root / "model.ckpt";
    d.save(f.ckpt);
    return f;
}

ServerConfig config(const Fixture& f, bool with_model = true) {
    ServerConfig c;
    c.data_root = f.root;
    if (with_model) c.checkpoint = f.ckpt;
    c.port = 0;
    return c;
}

json body(const httplib::Result& r) { return json::parse(r->body); }

std::string new_session(httplib::Client& cli) {
    auto r = cli.Post("/api/v1/sessions", R"({"dataset":"test","mode":"assisted"})", "application/json");
    EXPECT_EQ(r->status, 201);
    return body(r).at("session_id");
}

}  // namespace

TEST(Server, HealthMetaAndImages) {
    const auto f = make_fixture("srv_meta");
    AnnotationServer srv(config(f));
    httplib::Client cli("127.0.0.1", srv.start_background());
    auto h = cli.Get("/api/v1/health");
    ASSERT_TRUE(h);
    EXPECT_EQ(h->status, 200);
    EXPECT_TRUE(body(h).at("model_loaded").get<bool>());
    EXPECT_NE(body(h).at("model_version").get<std::string>().find("model.ckpt@"), std::string::npos);
    auto m = cli.Get("/api/v1/meta");
    EXPECT_EQ(body(m).at("classes"), json({"a", "b", "c"}));
    EXPECT_EQ(body(m).at("datasets"), json({"test"}));
    auto png = cli.Get("/api/v1/images/test_00001.png");
    EXPECT_EQ(png->status, 200);
    EXPECT_EQ(png->body.substr(1, 3), "PNG");
    EXPECT_EQ(cli.Get("/api/v1/images/nope.png")->status, 404);
    EXPECT_EQ(cli.Get("/api/v1/openapi")->status, 200);
    srv.stop();
}

TEST(Server, InferenceContract) {
    const auto f = make_fixture("srv_infer");
    AnnotationServer srv(config(f));
    httplib::Client cli("127.0.0.1", srv.start_background());
    auto r = cli.Post("/api/v1/infer", R"({"image_id":"test_00000","user_inputs":[{"x":10,"y":12,"class_id":1}]})",
                      "application/json");
    ASSERT_EQ(r->status, 200);
    const auto j = body(r);
    EXPECT_GE(j.at("latency_ms").get<double>(), 0.0);
    EXPECT_EQ(j.at("model_version"), srv.model_version());
    for (const auto& d : j.at("detections")) {
        EXPECT_EQ(d.at("bbox").size(), 4u);
        EXPECT_GE(d.at("score").get<double>(), 0.0);
        EXPECT_LE(d.at("score").get<double>(), 1.0);
        EXPECT_GE(d.at("class_id").get<int>(), 0);
        EXPECT_LT(d.at("class_id").get<int>(), 3);
    }
    // Same request twice gives the same answer.
    auto r2 = cli.Post("/api/v1/infer", R"({"image_id":"test_00000","user_inputs":[{"x":10,"y":12,"class_id":1}]})",
                       "application/json");
    EXPECT_EQ(body(r2).at("detections"), j.at("detections"));

    EXPECT_EQ(cli.Post("/api/v1/infer", R"({"image_id":"test_00000","user_inputs":[{"x":1,"y":1,"class_id":3}]})",
                       "application/json")->status, 400);
    EXPECT_EQ(cli.Post("/api/v1/infer", R"({"image_id":"missing","user_inputs":[]})", "application/json")->status, 404);
    EXPECT_EQ(cli.Post("/api/v1/infer", "{not json", "application/json")->status, 400);
    srv.stop();
}

TEST(Server, NoModelAnswers503) {
    const auto f = make_fixture("srv_nomodel");
    AnnotationServer srv(config(f, false));
    httplib::Client cli("127.0.0.1", srv.start_background());
    EXPECT_FALSE(body(cli.Get("/api/v1/health")).at("model_loaded").get<bool>());
    EXPECT_EQ(cli.Post("/api/v1/infer", R"({"image_id":"test_00000","user_inputs":[]})", "application/json")->status,
              503);
    srv.stop();
}

TEST(Server, SessionsAnnotationsEventsExport) {
    const auto f = make_fixture("srv_sess");
    AnnotationServer srv(config(f));
    httplib::Client cli("127.0.0.1", srv.start_background());
    EXPECT_EQ(cli.Post("/api/v1/sessions", R"({"dataset":"nope"})", "application/json")->status, 404);
    EXPECT_EQ(cli.Post("/api/v1/sessions", R"({"dataset":"test","mode":"auto"})", "application/json")->status, 400);
    const std::string sid = new_session(cli);
    EXPECT_EQ(body(cli.Get(("/api/v1/sessions/" + sid).c_str())).at("mode"), "assisted");
    EXPECT_EQ(cli.Get("/api/v1/sessions/unknown")->status, 404);

    const std::string ann = "/api/v1/sessions/" + sid + "/annotations/test_00000";
    EXPECT_EQ(body(cli.Get(ann.c_str())).at("boxes").size(), 0u);
    auto put = cli.Put(ann.c_str(), R"({"boxes":[{"bbox":[1,2,10,12],"class_id":2}]})", "application/json");
    EXPECT_EQ(put->status, 204);
    EXPECT_EQ(cli.Put(ann.c_str(), R"({"boxes":[{"bbox":[10,2,1,12],"class_id":2}]})", "application/json")->status, 422);
    EXPECT_EQ(cli.Put(ann.c_str(), R"({"boxes":[{"bbox":[1,2,10,12],"class_id":7}]})", "application/json")->status, 422);
    EXPECT_EQ(cli.Put(ann.c_str(), R"({"boxes":[{"bbox":[1,2,70,12],"class_id":0}]})", "application/json")->status, 422);
    const auto got = body(cli.Get(ann.c_str()));
    ASSERT_EQ(got.at("boxes").size(), 1u);
    EXPECT_EQ(got.at("boxes")[0].at("class_id"), 2);
    EXPECT_EQ(cli.Put(ann.c_str(), R"({"boxes":[{"bbox":[3,3,9,9],"class_id":0}]})", "application/json")->status, 204);
    const auto sdir = f.root / "sessions" / sid / "annotations";
    EXPECT_TRUE(std::filesystem::exists(sdir / "test_00000.json.bak"));

    const std::string ev = "/api/v1/sessions/" + sid + "/events";
    EXPECT_EQ(cli.Post(ev.c_str(), R"({"type":"click_hint","t_ms":100,"payload":{"x":3}})", "application/json")->status, 202);
    EXPECT_EQ(cli.Post(ev.c_str(), R"({"type":"draw_box","t_ms":250})", "application/json")->status, 202);
    EXPECT_EQ(cli.Post(ev.c_str(), R"({"type":"draw_box","t_ms":200})", "application/json")->status, 422);
    EXPECT_EQ(cli.Post(ev.c_str(), R"({"type":"teleport","t_ms":300})", "application/json")->status, 422);
    EXPECT_EQ(cli.Post(ev.c_str(), R"({"type":"submit","t_ms":900})", "application/json")->status, 202);

    const auto ex = body(cli.Get(("/api/v1/sessions/" + sid + "/export").c_str()));
    const auto& boxes = ex.at("annotations").at("test_00000");
    ASSERT_EQ(boxes.size(), 1u);
    EXPECT_EQ(boxes[0].at("bbox"), json({3.0, 3.0, 9.0, 9.0}));
    EXPECT_EQ(boxes[0].at("score"), 1.0);
    EXPECT_EQ(ex.at("stats").at("counts").at("draw_box"), 1);
    EXPECT_EQ(ex.at("stats").at("counts").at("click_hint"), 1);
    EXPECT_EQ(ex.at("stats").at("counts").at("delete_box"), 0);
    EXPECT_EQ(ex.at("stats").at("events"), 3);
    EXPECT_EQ(ex.at("stats").at("elapsed_ms"), 900);
    srv.stop();

    // Events are on disk, one JSON object per line.
    std::ifstream in(f.root / "sessions" / sid / "events.jsonl");
    int lines = 0;
    for (std::string line; std::getline(in, line);) {
        EXPECT_NO_THROW((void)json::parse(line));
        ++lines;
    }
    EXPECT_EQ(lines, 3);

    // State survives a restart.
    AnnotationServer again(config(f));
    httplib::Client cli2("127.0.0.1", again.start_background());
    EXPECT_EQ(cli2.Get(("/api/v1/sessions/" + sid).c_str())->status, 200);
    EXPECT_EQ(body(cli2.Get(ann.c_str())).at("boxes").size(), 1u);
    EXPECT_EQ(cli2.Post(ev.c_str(), R"({"type":"submit","t_ms":800})", "application/json")->status, 422);
    again.stop();
}

TEST(Queue, RefusesBeyondDepth) {
    InferenceQueue q(2);
    std::promise<void> gate;
    auto opened = gate.get_future().share();
    auto a = q.submit([opened] {
        opened.wait();
        return json(1);
    });
    auto b = q.submit([opened] {
        opened.wait();
        return json(2);
    });
    ASSERT_TRUE(a && b);
    EXPECT_FALSE(q.submit([] { return json(3); }).has_value());
    gate.set_value();
    EXPECT_EQ(a->get(), 1);
    EXPECT_EQ(b->get(), 2);
    auto c = q.submit([] { return json(4); });
    ASSERT_TRUE(c);
    EXPECT_EQ(c->get(), 4);
}

TEST(Queue, ServerReturns429WhenFull) {
    const auto f = make_fixture("srv_429");
    auto cfg = config(f);
    cfg.queue_depth = 1;
    AnnotationServer srv(cfg);
    httplib::Client cli("127.0.0.1", srv.start_background());
    std::promise<void> gate;
    auto opened = gate.get_future().share();
    auto blocker = srv.queue().submit([opened] {
        opened.wait();
        return json::array();
    });
    ASSERT_TRUE(blocker);
    EXPECT_EQ(cli.Post("/api/v1/infer", R"({"image_id":"test_00000","user_inputs":[]})", "application/json")->status,
              429);
    gate.set_value();
    blocker->get();
    EXPECT_EQ(cli.Post("/api/v1/infer", R"({"image_id":"test_00000","user_inputs":[]})", "application/json")->status,
              200);
    srv.stop();
}

TEST(Server, EnvironmentConfig) {
    setenv("C3DET_PORT", "9123", 1);
    setenv("C3DET_DATA", "/tmp/somewhere", 1);
    setenv("C3DET_CHECKPOINT", "/tmp/m.ckpt", 1);
    const auto c = server_config_from_env();
    EXPECT_EQ(c.port, 9123);
    EXPECT_EQ(c.data_root, "/tmp/somewhere");
    EXPECT_EQ(c.checkpoint, "/tmp/m.ckpt");
    unsetenv("C3DET_PORT");
    unsetenv("C3DET_DATA");
    unsetenv("C3DET_CHECKPOINT");
}
