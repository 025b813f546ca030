#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "dmflow/config_io.hpp"
#include "dmflow/error.hpp"
#include "dmflow/trainer.hpp"
#include "test_util.hpp"

using namespace dmflow;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
}

std::string make_tiny_dataset(const std::string& name, int64_t count, bool render) {
    CurationConfig cfg;
    cfg.count = count;
    cfg.clip_frames = 4;
    cfg.seed = 11;
    cfg.pad_vertices = 64;
    cfg.pad_faces = 160;
    cfg.min_resolution = 4;
    cfg.max_resolution = 5;
    cfg.render_silhouettes = render;
    cfg.silhouette_resolution = 16;
    const std::string dir = testutil::scratch_dir(name);
    generate_dataset(cfg, dir);
    return dir;
}

VaeConfig tiny_vae_config() {
    VaeConfig cfg;
    cfg.layers_enc = 1;
    cfg.layers_dec = 1;
    cfg.feature_dim = 16;
    cfg.heads = 2;
    cfg.fps_ratio = 4;
    cfg.d_cond = 8;
    cfg.d_jump = 4;
    cfg.d_traj = 8;
    cfg.frame_count = 4;
    cfg.pe_bands = 2;
    return cfg;
}

TrainConfig tiny_vae_train(const std::string& dataset, const std::string& out) {
    TrainConfig cfg;
    cfg.stage = "vae";
    cfg.iterations = 2;
    cfg.batch_size = 2;
    cfg.seed = 5;
    cfg.dataset_dir = dataset;
    cfg.out_dir = out;
    cfg.lr0 = 1e-4;
    cfg.lr1 = 1e-4;
    cfg.vae = tiny_vae_config();
    return cfg;
}

} // namespace

TEST_SUITE("trainer") {

TEST_CASE("cosine schedule endpoints and midpoint") {
    CHECK(cosine_lr(0, 1000) == doctest::Approx(2e-4).epsilon(1e-15));
    CHECK(cosine_lr(1000, 1000) == doctest::Approx(2e-5).epsilon(1e-15));
    CHECK(cosine_lr(500, 1000) == doctest::Approx(1.1e-4).epsilon(1e-12));
}

TEST_CASE("one step on a fixed batch strictly decreases the loss at lr 1e-4") {
    const std::string dataset = make_tiny_dataset("tr_decrease", 2, false);
    TrainConfig cfg = tiny_vae_train(dataset, testutil::scratch_dir("tr_decrease_out"));
    // batch == dataset, so consecutive steps see the same clips
    TrainStats stats = train_vae(cfg);
    CHECK(stats.steps == 2);
    CHECK(stats.last_loss < stats.first_loss);
}

TEST_CASE("metrics log satisfies the bookkeeping identity") {
    const std::string dataset = make_tiny_dataset("tr_csv", 2, false);
    const std::string out = testutil::scratch_dir("tr_csv_out");
    TrainConfig cfg = tiny_vae_train(dataset, out);
    (void)train_vae(cfg);

    std::ifstream is(out + "/metrics.csv");
    std::string header, line;
    REQUIRE(std::getline(is, header));
    CHECK(header == "step,lr,loss,recon_jump,recon_traj,kl_jump,kl_traj");
    REQUIRE(std::getline(is, line));
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ls(line);
    int64_t step;
    double lr, loss, rj, rt, kj, kt;
    ls >> step >> lr >> loss >> rj >> rt >> kj >> kt;
    CHECK(loss ==
          doctest::Approx(rj + rt + cfg.vae.eta_jump * kj + cfg.vae.eta_traj * kt).epsilon(1e-6));
}

TEST_CASE("checkpoint save/load/save round trip is byte identical") {
    VaeBundle bundle = VaeBundle::create(tiny_vae_config(), 3);
    Adam adam;
    adam.init(bundle.store);
    Checkpoint ckpt;
    ckpt.config_json = bundle.config_json();
    store_params(ckpt, bundle.store);
    adam.save_state(ckpt, bundle.store);

    const std::string dir = testutil::scratch_dir("ckpt_rt");
    save_checkpoint(dir + "/a.ckpt", ckpt);
    Checkpoint loaded = load_checkpoint(dir + "/a.ckpt");
    save_checkpoint(dir + "/b.ckpt", loaded);
    CHECK(read_file(dir + "/a.ckpt") == read_file(dir + "/b.ckpt"));

    // parameters survive a load into a freshly built bundle
    VaeBundle other = VaeBundle::create(tiny_vae_config(), 999);
    load_params(loaded, other.store);
    for (size_t i = 0; i < bundle.store.count(); ++i) {
        CHECK(other.store.at(i).value == bundle.store.at(i).value);
    }
}

TEST_CASE("resuming reproduces uninterrupted training bitwise") {
    const std::string dataset = make_tiny_dataset("tr_resume", 3, false);

    TrainConfig full = tiny_vae_train(dataset, testutil::scratch_dir("tr_resume_full"));
    full.iterations = 4;
    TrainStats full_stats = train_vae(full);

    TrainConfig part = tiny_vae_train(dataset, testutil::scratch_dir("tr_resume_part"));
    part.iterations = 2;
    TrainStats part_stats = train_vae(part);

    TrainConfig rest = tiny_vae_train(dataset, testutil::scratch_dir("tr_resume_rest"));
    rest.iterations = 4;
    rest.resume_from = part_stats.final_checkpoint;
    TrainStats rest_stats = train_vae(rest);

    CHECK(rest_stats.last_loss == full_stats.last_loss);  // bitwise
    CHECK(read_file(full_stats.final_checkpoint) == read_file(rest_stats.final_checkpoint));
}

TEST_CASE("single-threaded and two-worker training agree bitwise") {
    const std::string dataset = make_tiny_dataset("tr_threads", 4, false);

    TrainConfig a = tiny_vae_train(dataset, testutil::scratch_dir("tr_threads_1"));
    a.iterations = 3;
    a.batch_size = 4;
    a.threads = 1;
    TrainConfig b = a;
    b.out_dir = testutil::scratch_dir("tr_threads_2");
    b.threads = 2;

    TrainStats sa = train_vae(a);
    TrainStats sb = train_vae(b);
    CHECK(sa.last_loss == sb.last_loss);
    // checkpoints embed identical configs, so equal bytes mean equal weights
    CHECK(read_file(sa.final_checkpoint) == read_file(sb.final_checkpoint));
}

TEST_CASE("empty dataset is a distinct error") {
    TrainConfig cfg = tiny_vae_train(testutil::scratch_dir("tr_empty"), "/tmp/unused_out");
    try {
        (void)train_vae(cfg);
        FAIL("expected empty_dataset");
    } catch (const Error& e) {
        CHECK(e.code() == "empty_dataset");
    }
}

TEST_CASE("rf training keeps the vae frozen, logs drops and uses a constant lr") {
    const std::string dataset = make_tiny_dataset("tr_rf", 3, true);

    TrainConfig vae_cfg = tiny_vae_train(dataset, testutil::scratch_dir("tr_rf_vae"));
    TrainStats vae_stats = train_vae(vae_cfg);

    TrainConfig rf_cfg;
    rf_cfg.stage = "rf";
    rf_cfg.iterations = 4;
    rf_cfg.batch_size = 2;
    rf_cfg.seed = 6;
    rf_cfg.dataset_dir = dataset;
    rf_cfg.out_dir = testutil::scratch_dir("tr_rf_out");
    rf_cfg.lr_const = 1e-4;
    rf_cfg.rf.blocks = 1;
    rf_cfg.rf.model_dim = 16;
    rf_cfg.rf.heads = 2;
    rf_cfg.rf.ffn_mult = 2;
    rf_cfg.tokenizer.patch_t = 2;
    rf_cfg.tokenizer.patch_s = 8;
    rf_cfg.tokenizer.d_vid = 8;
    TrainStats stats = train_rf(rf_cfg, vae_stats.final_checkpoint);

    CHECK(stats.steps == 4);
    CHECK(stats.sample_count == 8);
    CHECK(stats.frozen_grad_norm == 0.0);

    // constant lr on every csv row
    std::ifstream is(rf_cfg.out_dir + "/metrics.csv");
    std::string line;
    std::getline(is, line);  // header
    int rows = 0;
    while (std::getline(is, line)) {
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream ls(line);
        int64_t step;
        double lr, loss;
        ls >> step >> lr >> loss;
        CHECK(lr == 1e-4);
        ++rows;
    }
    CHECK(rows == 4);

    // the produced checkpoint round trips through the bundle loader
    RfBundle bundle = RfBundle::from_checkpoint(stats.final_checkpoint);
    CHECK(bundle.rf.z_channels == tiny_vae_config().z_channels());
    CHECK(bundle.vae.feature_dim == tiny_vae_config().feature_dim);
}

TEST_CASE("rf training requires silhouettes") {
    const std::string dataset = make_tiny_dataset("tr_rf_nosil", 2, false);
    TrainConfig vae_cfg = tiny_vae_train(dataset, testutil::scratch_dir("tr_rf_nosil_vae"));
    TrainStats vae_stats = train_vae(vae_cfg);

    TrainConfig rf_cfg;
    rf_cfg.stage = "rf";
    rf_cfg.iterations = 1;
    rf_cfg.batch_size = 1;
    rf_cfg.dataset_dir = dataset;
    rf_cfg.out_dir = testutil::scratch_dir("tr_rf_nosil_out");
    try {
        (void)train_rf(rf_cfg, vae_stats.final_checkpoint);
        FAIL("expected missing_silhouette");
    } catch (const Error& e) {
        CHECK(e.code() == "missing_silhouette");
    }
}

TEST_CASE("train config json round trip") {
    TrainConfig cfg;
    cfg.stage = "rf";
    cfg.iterations = 77;
    cfg.seed = 9;
    cfg.vae.feature_dim = 32;
    cfg.rf.blocks = 3;
    cfg.tokenizer.d_vid = 48;
    TrainConfig back = train_config_from_json(train_config_to_json(cfg));
    CHECK(back.stage == "rf");
    CHECK(back.iterations == 77);
    CHECK(back.vae.feature_dim == 32);
    CHECK(back.rf.blocks == 3);
    CHECK(back.tokenizer.d_vid == 48);
}

} // TEST_SUITE
