#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>

#include "egomem/envmemory.hpp"
#include "egomem/util.hpp"
#include "support.hpp"

using namespace egomem;
using testsupport::box_env;

namespace {

// --- scalar reference helpers (no Tensor ops) ---------------------------------

using Vec = std::vector<double>;

Vec s_linear(const Vec& x, const Linear& l) {
    const std::size_t in = l.w.rows(), out = l.w.cols();
    REQUIRE(x.size() == in);
    Vec y(out);
    for (std::size_t j = 0; j < out; ++j) {
        double acc = l.b[j];
        for (std::size_t i = 0; i < in; ++i) acc += x[i] * l.w[i * out + j];
        y[j] = acc;
    }
    return y;
}

Vec s_layer_norm(const Vec& x, const LayerNormParams& p) {
    double mean = 0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(x.size());
    double var = 0;
    for (double v : x) var += (v - mean) * (v - mean);
    var /= static_cast<double>(x.size());
    const double istd = 1.0 / std::sqrt(var + 1e-5);
    Vec y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i)
        y[i] = (x[i] - mean) * istd * p.gain[i] + p.bias[i];
    return y;
}

Vec s_gelu(const Vec& x) {
    Vec y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i)
        y[i] = 0.5 * x[i] * (1.0 + std::erf(x[i] * 0.7071067811865475244));
    return y;
}

Vec s_add(const Vec& a, const Vec& b) {
    Vec y(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) y[i] = a[i] + b[i];
    return y;
}

// Single-query multi-head attention over a list of key/value rows.
Vec s_attention(const Vec& q, const std::vector<Vec>& kv, const AttentionParams& p,
                std::size_t heads) {
    const std::size_t d = q.size(), hd = d / heads;
    const Linear lq{p.wq, p.bq}, lk{p.wk, p.bk}, lv{p.wv, p.bv}, lo{p.wo, p.bo};
    const Vec qp = s_linear(q, lq);
    std::vector<Vec> kp, vp;
    for (const Vec& row : kv) {
        kp.push_back(s_linear(row, lk));
        vp.push_back(s_linear(row, lv));
    }
    Vec ctx(d, 0.0);
    for (std::size_t h = 0; h < heads; ++h) {
        Vec scores(kv.size());
        double mx = -1e300;
        for (std::size_t i = 0; i < kv.size(); ++i) {
            double s = 0;
            for (std::size_t j = 0; j < hd; ++j) s += qp[h * hd + j] * kp[i][h * hd + j];
            scores[i] = s / std::sqrt(static_cast<double>(hd));
            mx = std::max(mx, scores[i]);
        }
        double z = 0;
        for (double& s : scores) z += (s = std::exp(s - mx));
        for (std::size_t i = 0; i < kv.size(); ++i)
            for (std::size_t j = 0; j < hd; ++j) ctx[h * hd + j] += scores[i] / z * vp[i][h * hd + j];
    }
    return s_linear(ctx, lo);
}

Vec s_positional_encoding(std::size_t slot, std::size_t d) {
    Vec pe(d);
    for (std::size_t j = 0; j < d; ++j) {
        const std::size_t pair = j - j % 2;
        const double freq = std::exp(-std::log(10000.0) * static_cast<double>(pair) / d);
        pe[j] = (j % 2 == 0) ? std::sin(slot * freq) : std::cos(slot * freq);
    }
    return pe;
}

Vec s_encode(const EnvMemoryModel& m, const FrameFeature& f, const RelativePose& rel,
             std::size_t slot, bool has_slot) {
    Vec cat = f.values;
    const Vec embedded = s_linear({rel.dx, rel.dz, rel.sin_dt, rel.cos_dt}, m.pose_embed);
    cat.insert(cat.end(), embedded.begin(), embedded.end());
    Vec x = s_linear(cat, m.m_p);
    if (has_slot) x = s_add(x, s_positional_encoding(slot, m.config.d));
    return x;
}

ModelConfig tiny_config() {
    ModelConfig c;
    c.d = 8;
    c.heads = 2;
    c.layers_enc = 0;
    c.layers_dec = 1;
    c.K = 2;
    c.T = 8;
    c.rays = 2;
    c.num_classes = 2;
    c.pose_dim = 4;
    return c;
}

FrameFeature random_frame(std::size_t rays, std::size_t num_classes, Rng& rng) {
    FrameFeature f;
    f.rays = static_cast<int>(rays);
    f.num_classes = static_cast<int>(num_classes);
    f.values.assign(rays * (num_classes + 2), 0.0);
    for (std::size_t r = 0; r < rays; ++r) {
        const std::size_t slot = rng.uniform_int(num_classes + 2);
        f.values[r * (num_classes + 2) + slot] =
            slot == num_classes + 1 ? 1.0 : rng.uniform(0.05, 1.0);
    }
    return f;
}

}  // namespace

TEST_CASE("relative_pose: identity, dead ahead, round trip, unit circle") {
    const PoseC same{3.5, 2.25, 1.2};
    const RelativePose id = relative_pose(same, same);
    CHECK(id.dx == doctest::Approx(0).epsilon(1e-12));
    CHECK(id.dz == doctest::Approx(0).epsilon(1e-12));
    CHECK(id.sin_dt == doctest::Approx(0).epsilon(1e-12));
    CHECK(id.cos_dt == doctest::Approx(1).epsilon(1e-12));

    // one meter dead ahead of the query, any heading: (0, 1, 0, 1)
    for (int h = 0; h < 12; ++h) {
        const Pose q{4.0, 4.0, h};
        const PoseC p_q(q);
        const PoseC p_t{q.x + q.dir_x(), q.z + q.dir_z(), p_q.theta};
        const RelativePose rel = relative_pose(p_t, p_q);
        CHECK(std::abs(rel.dx) < 1e-12);
        CHECK(rel.dz == doctest::Approx(1).epsilon(1e-12));
        CHECK(std::abs(rel.sin_dt) < 1e-12);
        CHECK(rel.cos_dt == doctest::Approx(1).epsilon(1e-12));
    }

    Rng rng(3);
    for (int i = 0; i < 200; ++i) {
        const PoseC p_t{rng.uniform(0.0, 8.0), rng.uniform(0.0, 8.0), rng.uniform(0.0, 6.28)};
        const PoseC p_q{rng.uniform(0.0, 8.0), rng.uniform(0.0, 8.0), rng.uniform(0.0, 6.28)};
        const RelativePose rel = relative_pose(p_t, p_q);
        CHECK(rel.sin_dt * rel.sin_dt + rel.cos_dt * rel.cos_dt ==
              doctest::Approx(1).epsilon(1e-9));
        const PoseC back = inverse_relative_pose(rel, p_q);
        CHECK(back.x == doctest::Approx(p_t.x).epsilon(1e-9));
        CHECK(back.z == doctest::Approx(p_t.z).epsilon(1e-9));
        CHECK(std::abs(std::remainder(back.theta - p_t.theta, 2 * std::numbers::pi)) < 1e-9);
    }
}

TEST_CASE("add_pose_noise: disabled identity, bounded support, zero mean") {
    Rng rng(9);
    const PoseC p{1.0, 2.0, 0.5};
    NoiseParams off;
    const PoseC same = add_pose_noise(p, rng, off);
    CHECK(same.x == p.x);
    CHECK(same.z == p.z);
    CHECK(same.theta == p.theta);

    NoiseParams on;
    on.enabled = true;
    double sx = 0, sz = 0, st = 0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const PoseC q = add_pose_noise(p, rng, on);
        CHECK(std::abs(q.x - p.x) <= on.pos_range);
        CHECK(std::abs(q.z - p.z) <= on.pos_range);
        CHECK(std::abs(q.theta - p.theta) <= on.heading_range);
        sx += q.x - p.x;
        sz += q.z - p.z;
        st += q.theta - p.theta;
    }
    // 3 sigma of the sample mean of uniform(-r, r) is 3 r / sqrt(3 n)
    const double tol_pos = 3 * on.pos_range / std::sqrt(3.0 * n);
    const double tol_head = 3 * on.heading_range / std::sqrt(3.0 * n);
    CHECK(std::abs(sx / n) < tol_pos);
    CHECK(std::abs(sz / n) < tol_pos);
    CHECK(std::abs(st / n) < tol_head);
}

TEST_CASE("pose_input modes") {
    const PoseC p_t{3.0, 1.0, 0.7}, p_q{2.0, 2.0, 0.2};
    const RelativePose rel = pose_input(PoseMode::relative, p_t, p_q);
    const RelativePose direct = relative_pose(p_t, p_q);
    CHECK(rel.dx == direct.dx);
    CHECK(rel.dz == direct.dz);
    const RelativePose glob = pose_input(PoseMode::global, p_t, p_q);
    CHECK(glob.dx == p_t.x);
    CHECK(glob.dz == p_t.z);
    CHECK(glob.sin_dt == doctest::Approx(std::sin(p_t.theta)).epsilon(1e-12));
    const RelativePose none = pose_input(PoseMode::none, p_t, p_q);
    CHECK(none.dx == 0);
    CHECK(none.dz == 0);
    CHECK(none.sin_dt == 0);
    CHECK(none.cos_dt == 1);
}

TEST_CASE("sample_memory_frames: grids, jitter bounds, errors") {
    Rng rng(77);
    const auto all = sample_memory_frames(16, 16, SampleMode::inference, rng);
    REQUIRE(all.size() == 16);
    for (std::size_t i = 0; i < 16; ++i) CHECK(all[i] == i);

    const auto grid = sample_memory_frames(128, 16, SampleMode::inference, rng);
    REQUIRE(grid.size() == 16);
    for (std::size_t i = 0; i < 16; ++i) CHECK(grid[i] == 8 * i);

    for (int rep = 0; rep < 50; ++rep) {
        const auto train = sample_memory_frames(128, 16, SampleMode::train, rng);
        REQUIRE(train.size() == 16);
        for (std::size_t i = 0; i < train.size(); ++i) {
            CHECK(train[i] < 128);
            if (i > 0) CHECK(train[i] > train[i - 1]);
        }
    }
    CHECK_THROWS(sample_memory_frames(8, 9, SampleMode::inference, rng));
}

TEST_CASE("positional_encoding: slot 0 alternates 0 and 1; formula check") {
    const Tensor pe0 = positional_encoding(0, 8);
    for (std::size_t j = 0; j < 8; ++j) CHECK(pe0[j] == (j % 2 == 0 ? 0.0 : 1.0));
    const Tensor pe = positional_encoding(5, 8);
    const Vec ref = s_positional_encoding(5, 8);
    for (std::size_t j = 0; j < 8; ++j) CHECK(pe[j] == doctest::Approx(ref[j]).epsilon(1e-15));
}

TEST_CASE("encode_observation: loop oracle, zero input, and shape errors") {
    const EnvMemoryModel model = EnvMemoryModel::init(tiny_config(), 11);
    Rng rng(4);
    for (int rep = 0; rep < 10; ++rep) {
        const FrameFeature f = random_frame(2, 2, rng);
        const RelativePose rel{rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0),
                               std::sin(0.3 * rep), std::cos(0.3 * rep)};
        Tape tape;
        const Tensor x = encode_observation(tape, model, f, rel, rep);
        const Vec ref = s_encode(model, f, rel, rep, true);
        REQUIRE(x.size() == ref.size());
        for (std::size_t j = 0; j < ref.size(); ++j)
            CHECK(x[j] == doctest::Approx(ref[j]).epsilon(1e-10));
    }

    // zero feature and identity relative pose reduce to bias terms plus PE
    FrameFeature zero;
    zero.rays = 2;
    zero.num_classes = 2;
    zero.values.assign(8, 0.0);
    Tape tape;
    const Tensor x = encode_observation(tape, model, zero, {0, 0, 0, 1}, 0);
    const Vec ref = s_encode(model, zero, {0, 0, 0, 1}, 0, true);
    for (std::size_t j = 0; j < ref.size(); ++j)
        CHECK(x[j] == doctest::Approx(ref[j]).epsilon(1e-12));

    FrameFeature bad = zero;
    bad.values.resize(7);
    CHECK_THROWS_AS(encode_observation(tape, model, bad, {0, 0, 0, 1}, 0),
                    std::invalid_argument);
}

TEST_CASE("build_memory: determinism, K=1, zero-encoder oracle") {
    ModelConfig cfg = tiny_config();
    cfg.layers_enc = 2;
    const EnvMemoryModel model = EnvMemoryModel::init(cfg, 21);
    Rng rng(5);
    std::vector<FrameFeature> frames;
    std::vector<RelativePose> rels;
    for (int i = 0; i < 4; ++i) {
        frames.push_back(random_frame(2, 2, rng));
        rels.push_back({rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), 0.0, 1.0});
    }
    Tape t1, t2;
    const Tensor a = build_memory(t1, model, frames, rels);
    const Tensor b = build_memory(t2, model, frames, rels);
    REQUIRE(a.rows() == 4);
    REQUIRE(a.cols() == cfg.d);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);

    // single frame: self-attention over one token is well defined
    Tape t3;
    const Tensor single = build_memory(t3, model, {frames[0]}, {rels[0]});
    CHECK(single.rows() == 1);

    // with no encoder layers the memory is enc_norm over the encoded rows
    const EnvMemoryModel flat = EnvMemoryModel::init(tiny_config(), 21);
    Tape t4;
    const Tensor mem = build_memory(t4, flat, frames, rels);
    for (std::size_t i = 0; i < frames.size(); ++i) {
        const Vec ref = s_layer_norm(s_encode(flat, frames[i], rels[i], i, true), flat.enc_norm);
        for (std::size_t j = 0; j < ref.size(); ++j)
            CHECK(mem[i * flat.config.d + j] == doctest::Approx(ref[j]).epsilon(1e-10));
    }

    CHECK_THROWS(build_memory(t4, model, {}, {}));
}

TEST_CASE("encoder stack is permutation-equivariant without positional terms") {
    ModelConfig cfg = tiny_config();
    cfg.layers_enc = 2;
    const EnvMemoryModel model = EnvMemoryModel::init(cfg, 31);
    Rng rng(6);
    std::vector<FrameFeature> frames;
    for (int i = 0; i < 3; ++i) frames.push_back(random_frame(2, 2, rng));

    auto run = [&](const std::vector<std::size_t>& order) {
        Tape tape;
        std::vector<Tensor> rows;
        for (std::size_t i : order)
            rows.push_back(encode_observation(tape, model, frames[i], {0, 0, 0, 1}, 0,
                                              /*has_slot=*/false));
        Tensor x = concat_rows(tape, rows);
        for (const EncoderLayer& l : model.encoder) {
            const Tensor n1 = layer_norm(tape, x, l.ln1.gain, l.ln1.bias);
            x = add(tape, x, multi_head_attention(tape, n1, n1, n1, l.attn, cfg.heads).output);
            const Tensor n2 = layer_norm(tape, x, l.ln2.gain, l.ln2.bias);
            x = add(tape, x, linear(tape, gelu(tape, linear(tape, n2, l.ff1)), l.ff2));
        }
        return layer_norm(tape, x, model.enc_norm.gain, model.enc_norm.bias);
    };

    const Tensor fwd = run({0, 1, 2});
    const Tensor perm = run({2, 0, 1});
    const std::size_t inverse[3] = {1, 2, 0};  // row of frame i in the permuted run
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < cfg.d; ++j)
            CHECK(fwd.at(i, j) == doctest::Approx(perm.at(inverse[i], j)).epsilon(1e-12));
}

TEST_CASE("decode_query: row-stochastic attention, K=1, scalar loop oracle") {
    const ModelConfig cfg = tiny_config();
    const EnvMemoryModel model = EnvMemoryModel::init(cfg, 41);
    Rng rng(7);
    std::vector<FrameFeature> frames{random_frame(2, 2, rng), random_frame(2, 2, rng)};
    std::vector<RelativePose> rels{{0.5, -0.25, 0.0, 1.0}, {-1.0, 2.0, 1.0, 0.0}};
    const FrameFeature f_q = random_frame(2, 2, rng);

    Tape tape;
    const Tensor memory = build_memory(tape, model, frames, rels);
    const DecodeResult dec = decode_query(tape, model, memory, f_q);
    REQUIRE(dec.cross_attention.size() == cfg.layers_dec);
    for (const auto& layer : dec.cross_attention) {
        REQUIRE(layer.size() == frames.size());
        double sum = 0;
        for (double w : layer) {
            CHECK(w >= 0);
            sum += w;
        }
        CHECK(sum == doctest::Approx(1).epsilon(1e-5));
    }

    // scalar reference of the whole decode path (zero encoder layers)
    std::vector<Vec> mem_rows;
    for (std::size_t i = 0; i < frames.size(); ++i)
        mem_rows.push_back(
            s_layer_norm(s_encode(model, frames[i], rels[i], i, true), model.enc_norm));
    const DecoderLayer& l = model.decoder[0];
    Vec x = s_encode(model, f_q, {0, 0, 0, 1}, 0, false);
    Vec n1 = s_layer_norm(x, l.ln1);
    x = s_add(x, s_attention(n1, {n1}, l.self_attn, cfg.heads));
    Vec n2 = s_layer_norm(x, l.ln2);
    x = s_add(x, s_attention(n2, mem_rows, l.cross_attn, cfg.heads));
    Vec n3 = s_layer_norm(x, l.ln3);
    x = s_add(x, s_linear(s_gelu(s_linear(n3, l.ff1)), l.ff2));
    const Vec h_ref = s_layer_norm(x, model.dec_norm);
    REQUIRE(dec.h_q.size() == h_ref.size());
    for (std::size_t j = 0; j < h_ref.size(); ++j)
        CHECK(dec.h_q[j] == doctest::Approx(h_ref[j]).epsilon(1e-10));

    // K = 1: the only slot takes the full attention weight
    Tape t2;
    const Tensor mem1 = build_memory(t2, model, {frames[0]}, {rels[0]});
    const DecodeResult one = decode_query(t2, model, mem1, f_q);
    for (const auto& layer : one.cross_attention) {
        REQUIRE(layer.size() == 1);
        CHECK(layer[0] == 1.0);
    }
}

TEST_CASE("predict_local_state: shape, uniform at zero weights, loop oracle") {
    const ModelConfig cfg = tiny_config();
    EnvMemoryModel model = EnvMemoryModel::init(cfg, 51);
    Rng rng(8);
    const FrameFeature f_q = random_frame(2, 2, rng);
    const Tensor h_q = testsupport::random_tensor(1, cfg.d, 99, false);

    Tape tape;
    const Tensor logits = predict_local_state(tape, model, h_q, f_q);
    REQUIRE(logits.rows() == cfg.num_classes);
    REQUIRE(logits.cols() == 5);

    Vec cat = f_q.values;
    cat.insert(cat.end(), h_q.values().begin(), h_q.values().end());
    const Vec ref = s_linear(cat, model.m_h);
    for (std::size_t i = 0; i < ref.size(); ++i)
        CHECK(logits[i] == doctest::Approx(ref[i]).epsilon(1e-10));

    for (std::size_t i = 0; i < model.m_h.w.size(); ++i) model.m_h.w[i] = 0;
    for (std::size_t i = 0; i < model.m_h.b.size(); ++i) model.m_h.b[i] = 0;
    Tape t2;
    const Tensor zl = predict_local_state(t2, model, h_q, f_q);
    const Tensor probs = softmax(t2, zl, 1);
    for (std::size_t i = 0; i < probs.size(); ++i)
        CHECK(probs[i] == doctest::Approx(0.2).epsilon(1e-12));

    CHECK_THROWS(predict_local_state(t2, model, testsupport::random_tensor(1, cfg.d + 1, 1), f_q));
}

TEST_CASE("environment_feature: determinism and composition contract") {
    ModelConfig cfg = tiny_config();
    cfg.layers_enc = 1;
    cfg.rays = kDefaultRays;
    const EnvironmentSpec env = box_env();
    cfg.num_classes = env.object_taxonomy.size();
    const EnvMemoryModel model = EnvMemoryModel::init(cfg, 61);

    const Walkthrough walk = generate_walkthrough(env, 5, 32);
    std::vector<FrameFeature> features;
    for (const Pose& p : walk.poses) features.push_back(egocentric_features(env, p));

    Rng r1(100), r2(100);
    const EnvFeatureResult a =
        environment_feature(model, features, walk.poses, 17, 4, SampleMode::inference, r1);
    const EnvFeatureResult b =
        environment_feature(model, features, walk.poses, 17, 4, SampleMode::inference, r2);
    CHECK(a.h == b.h);
    CHECK(a.memory_steps == b.memory_steps);
    REQUIRE(a.memory_steps.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) CHECK(a.memory_steps[i] == 8 * i);

    // manual composition of sample + relative poses + build + decode
    const PoseC p_q(walk.poses[17]);
    std::vector<FrameFeature> mem_frames;
    std::vector<RelativePose> rels;
    for (std::size_t s : a.memory_steps) {
        mem_frames.push_back(features[s]);
        rels.push_back(relative_pose(PoseC(walk.poses[s]), p_q));
    }
    Tape tape;
    const Tensor memory = build_memory(tape, model, mem_frames, rels);
    const DecodeResult dec = decode_query(tape, model, memory, features[17]);
    CHECK(dec.h_q.values() == a.h);
    CHECK(dec.cross_attention == a.cross_attention);

    CHECK_THROWS(environment_feature(model, features, walk.poses, 99, 4,
                                     SampleMode::inference, r1));
}

TEST_CASE("slots attended with weight below 1e-6 barely influence the feature") {
    ModelConfig cfg = tiny_config();
    cfg.d = 16;
    cfg.heads = 2;
    const EnvMemoryModel model = [&] {
        EnvMemoryModel m = EnvMemoryModel::init(cfg, 71);
        for (std::size_t i = 0; i < m.decoder[0].cross_attn.wk.size(); ++i)
            m.decoder[0].cross_attn.wk[i] *= 64.0;  // sharpen the softmax
        return m;
    }();
    Rng rng(12);
    std::vector<FrameFeature> frames;
    std::vector<RelativePose> rels;
    for (int i = 0; i < 6; ++i) {
        frames.push_back(random_frame(2, 2, rng));
        rels.push_back({rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0), 0.0, 1.0});
    }
    const FrameFeature f_q = random_frame(2, 2, rng);

    auto decode = [&](const std::vector<FrameFeature>& fr) {
        Tape tape;
        return decode_query(tape, model, build_memory(tape, model, fr, rels), f_q);
    };
    const DecodeResult base = decode(frames);
    const auto& w = base.cross_attention[0];
    const std::size_t cold =
        std::min_element(w.begin(), w.end()) - w.begin();
    REQUIRE(w[cold] < 1e-6);

    std::vector<FrameFeature> perturbed = frames;
    perturbed[cold].values[0] += 0.01;
    const DecodeResult moved = decode(perturbed);
    double max_dh = 0;
    for (std::size_t j = 0; j < cfg.d; ++j)
        max_dh = std::max(max_dh, std::abs(moved.h_q[j] - base.h_q[j]));
    CHECK(max_dh < 1e-4);
}

TEST_CASE("end-to-end gradients pass finite differences on a two-frame toy") {
    const ModelConfig cfg = [] {
        ModelConfig c = tiny_config();
        c.layers_enc = 1;
        c.layers_dec = 1;
        return c;
    }();
    const EnvMemoryModel model = EnvMemoryModel::init(cfg, 81);
    Rng rng(13);
    const std::vector<FrameFeature> frames{random_frame(2, 2, rng), random_frame(2, 2, rng)};
    const std::vector<RelativePose> rels{{0.25, 0.5, 0.0, 1.0}, {-0.5, 1.0, 1.0, 0.0}};
    const FrameFeature f_q = random_frame(2, 2, rng);

    std::vector<Tensor> params;
    for (const NamedParam& p : model.parameters()) params.push_back(p.tensor);
    const double err = testsupport::fd_max_rel_err(
        [&](Tape& tape, const std::vector<Tensor>&) {
            const Tensor memory = build_memory(tape, model, frames, rels);
            const DecodeResult dec = decode_query(tape, model, memory, f_q);
            return predict_local_state(tape, model, dec.h_q, f_q);
        },
        params, 1e-5);
    CHECK(err < 1e-3);
}

TEST_CASE("model config JSON and preset values") {
    const ModelConfig desk = desk_preset();
    CHECK(desk.d == 64);
    CHECK(desk.heads == 4);
    CHECK(desk.K == 16);
    CHECK(desk.T == 128);
    const ModelConfig paper = paper_preset();
    CHECK(paper.d == 128);
    CHECK(paper.heads == 8);
    CHECK(paper.K == 32);
    CHECK(paper.T == 512);
    const ModelConfig back = ModelConfig::from_json(paper.to_json());
    CHECK(back.to_json() == paper.to_json());
}

TEST_CASE("checkpoint: save, load, forward bit-identical") {
    const ModelConfig cfg = tiny_config();
    const EnvMemoryModel model = EnvMemoryModel::init(cfg, 91);
    Rng rng(14);
    const std::vector<FrameFeature> frames{random_frame(2, 2, rng), random_frame(2, 2, rng)};
    const std::vector<RelativePose> rels{{0.0, 0.5, 0.0, 1.0}, {1.0, -1.0, 0.0, 1.0}};
    const FrameFeature f_q = random_frame(2, 2, rng);

    const std::string path =
        (std::filesystem::temp_directory_path() / "envmemory_test.ckpt").string();
    model.save(path);
    const EnvMemoryModel loaded = EnvMemoryModel::load(path);

    auto forward = [&](const EnvMemoryModel& m) {
        Tape tape;
        const Tensor memory = build_memory(tape, m, frames, rels);
        return decode_query(tape, m, memory, f_q).h_q.values();
    };
    CHECK(forward(model) == forward(loaded));
    std::filesystem::remove(path);
    std::filesystem::remove(path + ".json");
}
