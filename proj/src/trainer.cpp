#include "dmflow/trainer.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <thread>

#include "dmflow/config_io.hpp"
#include "dmflow/error.hpp"

namespace dmflow {

double cosine_lr(int64_t step, int64_t total, double lr0, double lr1) {
    require(total >= 1 && step >= 0 && step <= total, "invalid_arg", "cosine_lr: bad step/total");
    const double x = M_PI * static_cast<double>(step) / static_cast<double>(total);
    return lr1 + 0.5 * (lr0 - lr1) * (1.0 + std::cos(x));
}

// ---------------------------------------------------------------------- Adam

void Adam::init(const ParamStore& store) {
    t_ = 0;
    m_.clear();
    v_.clear();
    for (size_t i = 0; i < store.count(); ++i) {
        m_.emplace_back(store.at(i).value.shape());
        v_.emplace_back(store.at(i).value.shape());
    }
}

void Adam::step(ParamStore& store, double lr) {
    require(m_.size() == store.count(), "invalid_arg", "adam: not initialized for this store");
    ++t_;
    const double bc1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    for (size_t i = 0; i < store.count(); ++i) {
        Parameter& p = store.at(i);
        Tensor& m = m_[i];
        Tensor& v = v_[i];
        for (int64_t k = 0; k < p.value.size(); ++k) {
            const double grad = p.grad[k];
            m[k] = b1_ * m[k] + (1.0 - b1_) * grad;
            v[k] = b2_ * v[k] + (1.0 - b2_) * grad * grad;
            const double mhat = m[k] / bc1;
            const double vhat = v[k] / bc2;
            p.value[k] -= lr * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

void Adam::save_state(Checkpoint& ckpt, const ParamStore& store) const {
    ckpt.tensors.emplace_back("opt.t", Tensor::scalar(static_cast<double>(t_)));
    for (size_t i = 0; i < store.count(); ++i) {
        ckpt.tensors.emplace_back("opt.m." + store.at(i).name, m_[i]);
        ckpt.tensors.emplace_back("opt.v." + store.at(i).name, v_[i]);
    }
}

void Adam::load_state(const Checkpoint& ckpt, const ParamStore& store) {
    init(store);
    const Tensor* t = ckpt.find("opt.t");
    require(t != nullptr, "ckpt_mismatch", "adam: checkpoint has no optimizer state");
    t_ = static_cast<int64_t>((*t)[0]);
    for (size_t i = 0; i < store.count(); ++i) {
        const Tensor* m = ckpt.find("opt.m." + store.at(i).name);
        const Tensor* v = ckpt.find("opt.v." + store.at(i).name);
        require(m != nullptr && v != nullptr, "ckpt_mismatch",
                "adam: missing optimizer state for " + store.at(i).name);
        m_[i] = *m;
        v_[i] = *v;
    }
}

// ------------------------------------------------------------------- bundles

VaeBundle VaeBundle::create(const VaeConfig& cfg, uint64_t seed) {
    VaeBundle b;
    b.cfg = cfg;
    Rng rng(hash_mix(seed, 0x7ae5eedULL));
    b.model = std::make_unique<TriflowVae>(cfg, b.store, rng);
    return b;
}

VaeBundle VaeBundle::from_checkpoint(const std::string& path) {
    Checkpoint ckpt = load_checkpoint(path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(ckpt.config_json);
    } catch (const std::exception& e) {
        fail("ckpt_mismatch", "vae checkpoint has malformed config: " + std::string(e.what()));
    }
    require(j.value("kind", "") == "vae", "ckpt_mismatch",
            path + " is not a vae checkpoint (kind=" + j.value("kind", "?") + ")");
    VaeBundle b = create(vae_config_from_json(j.at("vae")), 0);
    load_params(ckpt, b.store);
    return b;
}

std::string VaeBundle::config_json() const {
    return nlohmann::json{{"kind", "vae"}, {"vae", vae_config_to_json(cfg)}}.dump();
}

RfBundle RfBundle::create(const RfConfig& rf, const TokenizerConfig& tok, const VaeConfig& vae,
                          uint64_t seed) {
    RfBundle b;
    b.rf = rf;
    b.tokenizer_cfg = tok;
    b.vae = vae;
    Rng rng(hash_mix(seed, 0x2f5eedULL));
    b.tokenizer = std::make_unique<PatchTokenizer>(tok, b.store, rng);
    b.model = std::make_unique<RfModel>(rf, b.store, rng);
    return b;
}

RfBundle RfBundle::from_checkpoint(const std::string& path) {
    Checkpoint ckpt = load_checkpoint(path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(ckpt.config_json);
    } catch (const std::exception& e) {
        fail("ckpt_mismatch", "rf checkpoint has malformed config: " + std::string(e.what()));
    }
    require(j.value("kind", "") == "rf", "ckpt_mismatch",
            path + " is not an rf checkpoint (kind=" + j.value("kind", "?") + ")");
    RfBundle b = create(rf_config_from_json(j.at("rf")), tokenizer_config_from_json(j.at("tokenizer")),
                        vae_config_from_json(j.at("vae")), 0);
    load_params(ckpt, b.store);
    return b;
}

std::string RfBundle::config_json() const {
    return nlohmann::json{{"kind", "rf"},
                          {"rf", rf_config_to_json(rf)},
                          {"tokenizer", tokenizer_config_to_json(tokenizer_cfg)},
                          {"vae", vae_config_to_json(vae)}}
        .dump();
}

// ------------------------------------------------------------------ data prep

std::vector<std::string> list_dataset(const std::string& dir) {
    require(std::filesystem::is_directory(dir), "empty_dataset", "dataset dir not found: " + dir);
    std::vector<std::string> paths;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.path().extension() == ".dmc") {
            paths.push_back(entry.path().string());
        }
    }
    std::sort(paths.begin(), paths.end());
    return paths;
}

VaeTrainItem make_vae_item(const TriflowVae& model, const ClipRecord& record) {
    Canonicalized canon =
        canonicalize(record.condition_mesh(), &record.sequence, model.config().dual_norm);
    Decomposition d = decompose(canon.cond.vertices, canon.seq->frames,
                                record.sequence.real_vertex_count, canon.norm);
    VaeTrainItem item;
    item.inputs = model.prepare_inputs(d);
    item.adj = build_adjacency(record.sequence.faces, record.sequence.vertex_count());
    item.gt_frames = canon.seq->frames;
    item.real_n = d.real_vertex_count;
    return item;
}

Tensor assemble_frames(const Tensor& v_cond, const Tensor* jump_rec, const Tensor& traj_rec) {
    const int64_t n = v_cond.rows();
    const int64_t t_count = traj_rec.cols() / 3;
    require(traj_rec.rows() == n && traj_rec.cols() == t_count * 3, "shape_mismatch",
            "assemble_frames: trajectory matrix shape");
    Tensor frames({t_count, n, 3});
    for (int64_t t = 0; t < t_count; ++t) {
        for (int64_t v = 0; v < n; ++v) {
            for (int64_t k = 0; k < 3; ++k) {
                double x = v_cond(v, k) + traj_rec(v, t * 3 + k);
                if (jump_rec != nullptr) x += (*jump_rec)(v, k);
                frames.at3(t, v, k) = x;
            }
        }
    }
    return frames;
}

Tensor reconstruct_frames(const TriflowVae& model, const VaeTrainItem& item) {
    Graph g;
    auto enc = model.encode(g, item.inputs, item.adj, nullptr, nullptr);
    auto dec = model.decode(g, enc.cond.x_cond, enc.z_jump, enc.z_traj, enc.cond.fine, item.real_n);
    const Tensor* jump = nullptr;
    Tensor jump_val;
    if (dec.jump_rec >= 0) {
        jump_val = g.val(dec.jump_rec);
        jump = &jump_val;
    }
    return assemble_frames(item.inputs.cond, jump, g.val(dec.traj_rec));
}

// -------------------------------------------------------------- train loops

namespace {

// Deterministic shuffled visitation: position p maps to perm_epoch[p % n]
// with one permutation per epoch.
class DataOrder {
public:
    DataOrder(int64_t n, uint64_t seed) : n_(n), seed_(seed) {}

    int64_t index_at(int64_t position) {
        const int64_t epoch = position / n_;
        if (epoch != epoch_) {
            perm_.resize(static_cast<size_t>(n_));
            std::iota(perm_.begin(), perm_.end(), int64_t{0});
            Rng rng(hash_mix(seed_, 0xda7a0000ULL + static_cast<uint64_t>(epoch)));
            for (int64_t i = n_ - 1; i > 0; --i) {
                const int64_t j = rng.uniform_int(i + 1);
                std::swap(perm_[static_cast<size_t>(i)], perm_[static_cast<size_t>(j)]);
            }
            epoch_ = epoch;
        }
        return perm_[static_cast<size_t>(position % n_)];
    }

private:
    int64_t n_;
    uint64_t seed_;
    int64_t epoch_ = -1;
    std::vector<int64_t> perm_;
};

using SampleFn = std::function<double(int64_t j, Graph& g, Graph::GradSink* sink)>;

// Gradients land in Parameter::grad in sample order regardless of the thread
// count.
std::vector<double> run_batch(int threads, int64_t batch, const SampleFn& fn) {
    std::vector<double> losses(static_cast<size_t>(batch), 0.0);
    if (threads <= 1) {
        Graph g;
        for (int64_t j = 0; j < batch; ++j) {
            g.clear();
            g.set_grad_sink(nullptr);
            losses[static_cast<size_t>(j)] = fn(j, g, nullptr);
        }
        return losses;
    }
    std::vector<Graph::GradSink> sinks(static_cast<size_t>(batch));
    std::vector<std::thread> workers;
    workers.reserve(static_cast<size_t>(threads));
    for (int w = 0; w < threads; ++w) {
        workers.emplace_back([&, w]() {
            for (int64_t j = w; j < batch; j += threads) {
                Graph g;
                g.set_grad_sink(&sinks[static_cast<size_t>(j)]);
                losses[static_cast<size_t>(j)] = fn(j, g, &sinks[static_cast<size_t>(j)]);
            }
        });
    }
    for (auto& t : workers) t.join();
    for (auto& sink : sinks) {
        for (auto& [param, grad] : sink.grads) {
            param->grad.add_(grad);
        }
    }
    return losses;
}

void clip_gradients(ParamStore& store, double max_norm) {
    if (max_norm <= 0.0) return;
    const double norm = store.grad_norm();
    if (norm > max_norm) {
        store.scale_grads(max_norm / norm);
    }
}

std::ofstream open_metrics(const std::string& out_dir, const std::string& header) {
    std::filesystem::create_directories(out_dir);
    const std::string path = (std::filesystem::path(out_dir) / "metrics.csv").string();
    const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
    std::ofstream os(path, std::ios::app);
    require(os.good(), "io", "cannot open metrics file " + path);
    if (fresh) os << header << "\n";
    return os;
}

void save_train_checkpoint(const std::string& path, const std::string& config_json,
                           const ParamStore& store, const Adam& adam, int64_t next_step) {
    Checkpoint ckpt;
    ckpt.config_json = config_json;
    store_params(ckpt, store);
    adam.save_state(ckpt, store);
    ckpt.tensors.emplace_back("trainer.step", Tensor::scalar(static_cast<double>(next_step)));
    save_checkpoint(path, ckpt);
}

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

} // namespace

TrainStats train_vae(const TrainConfig& cfg) {
    VaeConfig vc = cfg.vae;
    vc.validate();
    require(cfg.iterations >= 1 && cfg.batch_size >= 1, "invalid_arg", "train_vae: bad sizes");

    const auto paths = list_dataset(cfg.dataset_dir);
    require(!paths.empty(), "empty_dataset", "train_vae: no .dmc clips in " + cfg.dataset_dir);

    VaeBundle bundle = VaeBundle::create(vc, cfg.seed);
    Adam adam;
    adam.init(bundle.store);
    int64_t start_step = 0;
    if (!cfg.resume_from.empty()) {
        Checkpoint ckpt = load_checkpoint(cfg.resume_from);
        require(ckpt.config_json == bundle.config_json(), "ckpt_mismatch",
                "train_vae: resume checkpoint config does not match");
        load_params(ckpt, bundle.store);
        adam.load_state(ckpt, bundle.store);
        const Tensor* s = ckpt.find("trainer.step");
        require(s != nullptr, "ckpt_mismatch", "train_vae: resume checkpoint has no step");
        start_step = static_cast<int64_t>((*s)[0]);
    }

    std::vector<VaeTrainItem> items;
    items.reserve(paths.size());
    for (const auto& p : paths) {
        items.push_back(make_vae_item(*bundle.model, read_clip(p)));
    }

    std::ofstream metrics =
        open_metrics(cfg.out_dir, "step,lr,loss,recon_jump,recon_traj,kl_jump,kl_traj");
    DataOrder order(static_cast<int64_t>(items.size()), cfg.seed);
    const TriflowVae& model = *bundle.model;

    TrainStats stats;
    for (int64_t step = start_step; step < cfg.iterations; ++step) {
        const double lr = cosine_lr(step, cfg.iterations, cfg.lr0, cfg.lr1);
        bundle.store.zero_grads();

        std::vector<int64_t> batch_idx(static_cast<size_t>(cfg.batch_size));
        for (int64_t j = 0; j < cfg.batch_size; ++j) {
            batch_idx[static_cast<size_t>(j)] = order.index_at(step * cfg.batch_size + j);
        }
        std::vector<double> pj(batch_idx.size(), 0.0), pt(batch_idx.size(), 0.0),
            kj(batch_idx.size(), 0.0), kt(batch_idx.size(), 0.0);

        auto sample = [&](int64_t j, Graph& g, Graph::GradSink*) -> double {
            const VaeTrainItem& item = items[static_cast<size_t>(batch_idx[static_cast<size_t>(j)])];
            Rng rng(hash_mix(hash_mix(cfg.seed, 0x57e90000ULL + static_cast<uint64_t>(step)),
                             static_cast<uint64_t>(j)));
            const int64_t n_tokens = model.token_count(item.inputs.real_n);
            Tensor noise_jump, noise_traj;
            if (model.config().jump_decomp) {
                noise_jump = Tensor({n_tokens, model.config().d_jump});
                for (int64_t i = 0; i < noise_jump.size(); ++i) noise_jump[i] = rng.gauss();
            }
            noise_traj = Tensor({n_tokens, model.config().d_traj});
            for (int64_t i = 0; i < noise_traj.size(); ++i) noise_traj[i] = rng.gauss();

            auto enc = model.encode(g, item.inputs, item.adj,
                                    model.config().jump_decomp ? &noise_jump : nullptr, &noise_traj);
            auto dec = model.decode(g, enc.cond.x_cond, enc.z_jump, enc.z_traj, enc.cond.fine,
                                    item.inputs.real_n);
            auto loss = model.loss(g, item.inputs, dec, enc);
            g.backward(loss.total);
            if (loss.recon_jump >= 0) pj[static_cast<size_t>(j)] = g.scalar(loss.recon_jump);
            if (loss.recon_traj >= 0) pt[static_cast<size_t>(j)] = g.scalar(loss.recon_traj);
            if (loss.kl_jump >= 0) kj[static_cast<size_t>(j)] = g.scalar(loss.kl_jump);
            if (loss.kl_traj >= 0) kt[static_cast<size_t>(j)] = g.scalar(loss.kl_traj);
            return g.scalar(loss.total);
        };

        const auto losses = run_batch(cfg.threads, cfg.batch_size, sample);
        bundle.store.scale_grads(1.0 / static_cast<double>(cfg.batch_size));
        clip_gradients(bundle.store, cfg.grad_clip);
        adam.step(bundle.store, lr);

        const double loss = mean_of(losses);
        if (step == start_step) stats.first_loss = loss;
        stats.last_loss = loss;
        ++stats.steps;
        metrics << step << "," << lr << "," << loss << "," << mean_of(pj) << "," << mean_of(pt)
                << "," << mean_of(kj) << "," << mean_of(kt) << "\n";
        metrics.flush();

        if (cfg.checkpoint_interval > 0 && (step + 1) % cfg.checkpoint_interval == 0 &&
            step + 1 < cfg.iterations) {
            char name[48];
            std::snprintf(name, sizeof(name), "vae_step_%06" PRId64 ".ckpt", step + 1);
            save_train_checkpoint((std::filesystem::path(cfg.out_dir) / name).string(),
                                  bundle.config_json(), bundle.store, adam, step + 1);
        }
    }

    const std::string final_path = (std::filesystem::path(cfg.out_dir) / "vae_final.ckpt").string();
    save_train_checkpoint(final_path, bundle.config_json(), bundle.store, adam, cfg.iterations);
    stats.final_checkpoint = final_path;
    return stats;
}

TrainStats train_rf(const TrainConfig& cfg, const std::string& vae_ckpt_path) {
    require(cfg.iterations >= 1 && cfg.batch_size >= 1, "invalid_arg", "train_rf: bad sizes");
    VaeBundle vae = VaeBundle::from_checkpoint(vae_ckpt_path);

    const auto paths = list_dataset(cfg.dataset_dir);
    require(!paths.empty(), "empty_dataset", "train_rf: no .dmc clips in " + cfg.dataset_dir);

    // Frozen-VAE encode of every clip plus tokenizer-ready silhouette patches.
    struct RfItem {
        Tensor x_cond;   // n x cond_channels
        Tensor z_dyn;    // n x z_channels (posterior means)
        Tensor patches;  // L x patch_volume
        Tensor pos_enc;  // L x d_vid
    };
    std::vector<RfItem> items;
    int64_t video_tokens = -1;

    // the tokenizer's patch grid is parameter-free, so a throwaway instance
    // prepares the cached inputs before the trainable bundle exists
    {
        ParamStore scratch;
        Rng scratch_rng(0);
        PatchTokenizer probe(cfg.tokenizer, scratch, scratch_rng);
        for (const auto& p : paths) {
            ClipRecord rec = read_clip(p);
            require(rec.silhouette.has_value(), "missing_silhouette",
                    "train_rf: clip has no silhouette video: " + p);
            VaeTrainItem vitem = make_vae_item(*vae.model, rec);
            Graph g;
            auto enc = vae.model->encode(g, vitem.inputs, vitem.adj, nullptr, nullptr);
            RfItem item;
            item.x_cond = g.val(enc.cond.x_cond);
            if (vae.cfg.jump_decomp) {
                const Tensor& mu_j = g.val(enc.jump.mu);
                const Tensor& mu_t = g.val(enc.traj.mu);
                item.z_dyn = Tensor({mu_j.rows(), mu_j.cols() + mu_t.cols()});
                for (int64_t r = 0; r < mu_j.rows(); ++r) {
                    for (int64_t c = 0; c < mu_j.cols(); ++c) item.z_dyn(r, c) = mu_j(r, c);
                    for (int64_t c = 0; c < mu_t.cols(); ++c)
                        item.z_dyn(r, mu_j.cols() + c) = mu_t(r, c);
                }
            } else {
                item.z_dyn = g.val(enc.traj.mu);
            }
            const SilhouetteVideo& sil = *rec.silhouette;
            item.patches = probe.patches(sil);
            item.pos_enc = probe.position_encoding(sil.frames, sil.height, sil.width);
            const int64_t l = item.patches.rows();
            require(video_tokens < 0 || video_tokens == l, "shape_mismatch",
                    "train_rf: clips disagree on video token count");
            video_tokens = l;
            items.push_back(std::move(item));
        }
    }

    RfConfig rc = cfg.rf;
    rc.z_channels = vae.cfg.z_channels();
    rc.cond_channels = vae.cfg.d_cond;
    rc.d_vid = cfg.tokenizer.d_vid;
    rc.video_tokens = video_tokens;
    rc.validate();

    RfBundle bundle = RfBundle::create(rc, cfg.tokenizer, vae.cfg, cfg.seed);
    Adam adam;
    adam.init(bundle.store);
    int64_t start_step = 0;
    if (!cfg.resume_from.empty()) {
        Checkpoint ckpt = load_checkpoint(cfg.resume_from);
        require(ckpt.config_json == bundle.config_json(), "ckpt_mismatch",
                "train_rf: resume checkpoint config does not match");
        load_params(ckpt, bundle.store);
        adam.load_state(ckpt, bundle.store);
        const Tensor* s = ckpt.find("trainer.step");
        require(s != nullptr, "ckpt_mismatch", "train_rf: resume checkpoint has no step");
        start_step = static_cast<int64_t>((*s)[0]);
    }

    std::ofstream metrics = open_metrics(cfg.out_dir, "step,lr,loss");
    DataOrder order(static_cast<int64_t>(items.size()), cfg.seed);
    const RfModel& model = *bundle.model;
    const PatchTokenizer& tokenizer = *bundle.tokenizer;

    TrainStats stats;
    for (int64_t step = start_step; step < cfg.iterations; ++step) {
        const double lr = cfg.lr_const;
        bundle.store.zero_grads();

        std::vector<int64_t> batch_idx(static_cast<size_t>(cfg.batch_size));
        std::vector<uint8_t> drops(static_cast<size_t>(cfg.batch_size), 0);
        std::vector<double> ts(static_cast<size_t>(cfg.batch_size), 0.0);
        for (int64_t j = 0; j < cfg.batch_size; ++j) {
            batch_idx[static_cast<size_t>(j)] = order.index_at(step * cfg.batch_size + j);
        }

        auto sample = [&](int64_t j, Graph& g, Graph::GradSink*) -> double {
            const RfItem& item = items[static_cast<size_t>(batch_idx[static_cast<size_t>(j)])];
            Rng rng(hash_mix(hash_mix(cfg.seed, 0x2f900000ULL + static_cast<uint64_t>(step)),
                             static_cast<uint64_t>(j)));
            const bool drop = rng.uniform01() < rc.cond_drop_p;
            const double t = rng.uniform01();
            Tensor eps(item.z_dyn.shape());
            for (int64_t i = 0; i < eps.size(); ++i) eps[i] = rng.gauss();
            drops[static_cast<size_t>(j)] = drop ? 1 : 0;
            ts[static_cast<size_t>(j)] = t;

            NodeId f_vid = drop ? -1 : tokenizer.tokens(g, item.patches, item.pos_enc);
            auto fl = model.flow_loss(g, item.z_dyn, item.x_cond, f_vid, drop, t, eps);
            g.backward(fl.loss);
            return g.scalar(fl.loss);
        };

        const auto losses = run_batch(cfg.threads, cfg.batch_size, sample);
        bundle.store.scale_grads(1.0 / static_cast<double>(cfg.batch_size));
        clip_gradients(bundle.store, cfg.grad_clip);
        adam.step(bundle.store, lr);

        for (uint8_t d : drops) stats.drop_count += d;
        stats.sample_count += cfg.batch_size;
        const double loss = mean_of(losses);
        if (step == start_step) stats.first_loss = loss;
        stats.last_loss = loss;
        ++stats.steps;
        metrics << step << "," << lr << "," << loss << "\n";
        metrics.flush();

        if (cfg.checkpoint_interval > 0 && (step + 1) % cfg.checkpoint_interval == 0 &&
            step + 1 < cfg.iterations) {
            char name[48];
            std::snprintf(name, sizeof(name), "rf_step_%06" PRId64 ".ckpt", step + 1);
            save_train_checkpoint((std::filesystem::path(cfg.out_dir) / name).string(),
                                  bundle.config_json(), bundle.store, adam, step + 1);
        }
    }

    const std::string final_path = (std::filesystem::path(cfg.out_dir) / "rf_final.ckpt").string();
    save_train_checkpoint(final_path, bundle.config_json(), bundle.store, adam, cfg.iterations);
    stats.final_checkpoint = final_path;
    stats.frozen_grad_norm = vae.store.grad_norm();
    return stats;
}

} // namespace dmflow
