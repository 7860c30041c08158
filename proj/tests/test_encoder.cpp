#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

#include "embedkit/encoder.hpp"
#include "embedkit/errors.hpp"
#include "reference_encoder.hpp"
#include "test_util.hpp"

using namespace embedkit;

namespace {

EncoderConfig tiny_config(Pooling pooling = Pooling::mean) {
    EncoderConfig cfg;
    cfg.n_layers = 2;
    cfg.d_model = 16;
    cfg.n_heads = 4;
    cfg.d_ffn = 24;
    cfg.d_intermediate = 24;
    cfg.d_out = 8;
    cfg.max_seq_len = 32;
    cfg.mrl_dims = {8, 4, 2};
    cfg.pooling = pooling;
    return cfg;
}

double row_norm(const Tensor& t, int row) {
    double n2 = 0.0;
    for (int j = 0; j < t.cols(); ++j) n2 += t.at(row, j) * t.at(row, j);
    return std::sqrt(n2);
}

}  // namespace

TEST_CASE("config validation") {
    EncoderConfig cfg = tiny_config();
    CHECK_NOTHROW(cfg.validate());
    cfg.n_heads = 3;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = tiny_config();
    cfg.d_out = 100;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = tiny_config();
    cfg.mrl_dims = {4, 8};
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("init is deterministic and has the exact name set") {
    const EncoderConfig cfg = tiny_config(Pooling::attention);
    const NamedTensors a = init_params(cfg, 5);
    const NamedTensors b = init_params(cfg, 5);
    REQUIRE(a.size() == b.size());
    for (const auto& [name, t] : a) {
        CHECK(t.data == b.at(name).data);
    }
    const auto names = expected_param_names(cfg);
    CHECK(a.size() == names.size());
    for (const std::string& n : names) CHECK(a.count(n) == 1);
    CHECK(a.count("pool.query") == 1);

    const NamedTensors mean_params = init_params(tiny_config(Pooling::mean), 5);
    CHECK(mean_params.count("pool.query") == 0);
    const NamedTensors c = init_params(cfg, 6);
    CHECK(c.at("proj.g").data != a.at("proj.g").data);
}

TEST_CASE("linear init variance is near one over fan-in") {
    EncoderConfig cfg = tiny_config();
    cfg.d_model = 32;
    cfg.d_ffn = 32;
    cfg.d_intermediate = 32;
    cfg.d_out = 16;
    cfg.mrl_dims = {16};
    double var_sum = 0.0;
    int count = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const NamedTensors params = init_params(cfg, seed);
        const Tensor& w = params.at("layers.0.attn.wq");
        for (double v : w.data) {
            var_sum += v * v;
            ++count;
        }
    }
    const double var = var_sum / count;
    CHECK(var == doctest::Approx(1.0 / 32.0).epsilon(0.2));
}

TEST_CASE("encode_tokens shape, masking and id range") {
    const EncoderConfig cfg = tiny_config();
    const NamedTensors params = init_params(cfg, 1);

    const Tensor one = encode_tokens(cfg, params, tokenize("", 1));
    CHECK(one.rows() == 1);
    CHECK(one.cols() == cfg.d_model);

    TokenSeq bad;
    bad.ids = {kBosId, 999};
    CHECK_THROWS_AS(encode_tokens(cfg, params, bad), std::invalid_argument);

    // pad-tail positions do not affect content rows
    const TokenSeq short_seq = tokenize("hello", 10);
    const TokenSeq long_seq = tokenize("hello", 20);
    const Tensor a = encode_tokens(cfg, params, short_seq);
    const Tensor b = encode_tokens(cfg, params, long_seq);
    for (int i = 0; i < short_seq.valid_length(); ++i) {
        for (int j = 0; j < cfg.d_model; ++j) CHECK(a.at(i, j) == b.at(i, j));
    }
}

TEST_CASE("graph forward matches the straight-line oracle") {
    const EncoderConfig cfg = tiny_config();
    const NamedTensors params = init_params(cfg, 42);
    const TokenSeq tokens = tokenize("the quick brown fox", cfg.max_seq_len);
    const std::vector<int> ids(tokens.ids.begin(), tokens.ids.begin() + tokens.valid_length());

    Graph g;
    const BoundEncoder enc = bind_params(g, cfg, params);
    const Tensor& got = g.value(encoder_forward(g, enc, ids));
    const reference::Mat want = reference::forward_tokens(cfg, params, ids);
    REQUIRE(got.rows() == static_cast<int>(want.size()));
    for (int i = 0; i < got.rows(); ++i) {
        for (int j = 0; j < got.cols(); ++j) {
            CHECK(got.at(i, j) == doctest::Approx(want[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)])
                                      .epsilon(1e-12));
        }
    }
}

TEST_CASE("full text pipeline matches the oracle at every width") {
    const EncoderConfig cfg = tiny_config();
    const NamedTensors params = init_params(cfg, 9);
    for (int dim : {8, 4, 2}) {
        const Tensor got = embed_text(cfg, params, "a small sentence", dim);
        const std::vector<double> want = reference::embed_text(cfg, params, "a small sentence", dim);
        REQUIRE(got.cols() == static_cast<int>(want.size()));
        for (int j = 0; j < got.cols(); ++j) {
            CHECK(got.at(0, j) == doctest::Approx(want[static_cast<std::size_t>(j)]).epsilon(1e-12));
        }
    }
}

TEST_CASE("pooling variants") {
    const EncoderConfig cfg = tiny_config();
    const NamedTensors params = init_params(cfg, 2);
    std::mt19937_64 rng(3);

    SUBCASE("mean of constant rows is the row") {
        Tensor t = Tensor::zeros(5, cfg.d_model);
        for (int i = 0; i < 5; ++i) {
            for (int j = 0; j < cfg.d_model; ++j) t.at(i, j) = 0.25 * j;
        }
        const Tensor pooled = pool(cfg, params, t, std::vector<bool>(5, false));
        for (int j = 0; j < cfg.d_model; ++j) CHECK(pooled.at(0, j) == doctest::Approx(0.25 * j).epsilon(1e-15));
    }

    SUBCASE("mean equals the column-sum oracle") {
        const Tensor t = testutil::random_tensor(5, cfg.d_model, rng);
        const Tensor pooled = pool(cfg, params, t, std::vector<bool>(5, false));
        for (int j = 0; j < cfg.d_model; ++j) {
            double want = 0.0;
            for (int i = 0; i < 5; ++i) want += t.at(i, j);
            CHECK(pooled.at(0, j) == doctest::Approx(want / 5.0).epsilon(1e-13));
        }
    }

    SUBCASE("first and last pooling pick the right rows") {
        EncoderConfig f = cfg;
        f.pooling = Pooling::first;
        const Tensor t = testutil::random_tensor(4, cfg.d_model, rng);
        std::vector<bool> mask(4, false);
        mask[3] = true;  // last position padded
        const NamedTensors fp = init_params(f, 2);
        const Tensor first = pool(f, fp, t, mask);
        for (int j = 0; j < cfg.d_model; ++j) CHECK(first.at(0, j) == t.at(0, j));
        f.pooling = Pooling::last;
        const Tensor last = pool(f, init_params(f, 2), t, mask);
        for (int j = 0; j < cfg.d_model; ++j) CHECK(last.at(0, j) == t.at(2, j));
    }

    SUBCASE("all-pad input is rejected") {
        const Tensor t = Tensor::zeros(3, cfg.d_model);
        CHECK_THROWS_AS(pool(cfg, params, t, std::vector<bool>(3, true)), std::invalid_argument);
    }

    SUBCASE("attention pooling with equal logits is the mean of values") {
        EncoderConfig a = tiny_config(Pooling::attention);
        NamedTensors ap = init_params(a, 4);
        // zero keys force uniform attention within every head
        ap.at("pool.wk") = Tensor::zeros(a.d_model, a.d_model);
        const Tensor t = testutil::random_tensor(6, a.d_model, rng);
        const Tensor pooled = pool(a, ap, t, std::vector<bool>(6, false));

        Graph g;
        const Tensor v = g.value(g.matmul(g.constant(t), g.constant(ap.at("pool.wv"))));
        for (int j = 0; j < a.d_model; ++j) {
            double want = 0.0;
            for (int i = 0; i < 6; ++i) want += v.at(i, j);
            CHECK(pooled.at(0, j) == doctest::Approx(want / 6.0).epsilon(1e-12));
        }
    }

    SUBCASE("attention pooling output stays in the convex hull of values per head") {
        EncoderConfig a = tiny_config(Pooling::attention);
        const NamedTensors ap = init_params(a, 4);
        const Tensor t = testutil::random_tensor(6, a.d_model, rng);
        const Tensor pooled = pool(a, ap, t, std::vector<bool>(6, false));
        Graph g;
        const Tensor v = g.value(g.matmul(g.constant(t), g.constant(ap.at("pool.wv"))));
        for (int j = 0; j < a.d_model; ++j) {
            double lo = 1e300, hi = -1e300;
            for (int i = 0; i < 6; ++i) {
                lo = std::min(lo, v.at(i, j));
                hi = std::max(hi, v.at(i, j));
            }
            CHECK(pooled.at(0, j) >= lo - 1e-12);
            CHECK(pooled.at(0, j) <= hi + 1e-12);
        }
    }
}

TEST_CASE("projection composition") {
    EncoderConfig cfg = tiny_config();
    NamedTensors params = init_params(cfg, 6);
    std::mt19937_64 rng(8);

    SUBCASE("identity-padded g with truncating f selects the leading coordinates") {
        Tensor g = Tensor::zeros(cfg.d_model, cfg.d_intermediate);
        for (int i = 0; i < cfg.d_model; ++i) g.at(i, i) = 1.0;
        Tensor f = Tensor::zeros(cfg.d_intermediate, cfg.d_out);
        for (int i = 0; i < cfg.d_out; ++i) f.at(i, i) = 1.0;
        params.at("proj.g") = g;
        params.at("proj.f") = f;
        const Tensor pooled = testutil::random_tensor(1, cfg.d_model, rng);
        const Tensor out = project(cfg, params, pooled);
        for (int j = 0; j < cfg.d_out; ++j) CHECK(out.at(0, j) == pooled.at(0, j));
    }

    SUBCASE("zero input maps to zero") {
        const Tensor out = project(cfg, params, Tensor::zeros(1, cfg.d_model));
        for (double v : out.data) CHECK(v == 0.0);
    }

    SUBCASE("random maps match a two-step product oracle") {
        const Tensor pooled = testutil::random_tensor(1, cfg.d_model, rng);
        const Tensor out = project(cfg, params, pooled);
        Graph g;
        const Tensor want = g.value(g.matmul(g.matmul(g.constant(pooled), g.constant(params.at("proj.g"))),
                                             g.constant(params.at("proj.f"))));
        for (int j = 0; j < cfg.d_out; ++j) CHECK(out.at(0, j) == want.at(0, j));
    }
}

TEST_CASE("embed_text contract") {
    const EncoderConfig cfg = tiny_config();
    const NamedTensors params = init_params(cfg, 11);

    SUBCASE("unit norm at every configured width") {
        for (int dim : {8, 4, 2}) {
            const Tensor e = embed_text(cfg, params, "check the norm", dim);
            CHECK(std::abs(row_norm(e, 0) - 1.0) < 1e-12);
        }
    }

    SUBCASE("half-width embedding is the renormalized first half") {
        Graph g;
        const BoundEncoder enc = bind_params(g, cfg, params);
        const Tensor raw = g.value(embed_text_forward(g, enc, "halves"));
        const Tensor half = embed_text(cfg, params, "halves", 4);
        double n2 = 0.0;
        for (int j = 0; j < 4; ++j) n2 += raw.at(0, j) * raw.at(0, j);
        const double inv = 1.0 / std::sqrt(n2);
        for (int j = 0; j < 4; ++j) CHECK(half.at(0, j) == doctest::Approx(raw.at(0, j) * inv).epsilon(1e-15));
    }

    SUBCASE("identical text embeds identically") {
        const Tensor a = embed_text(cfg, params, "same text", 8);
        const Tensor b = embed_text(cfg, params, "same text", 8);
        CHECK(a.data == b.data);
    }

    SUBCASE("unconfigured widths are rejected") {
        CHECK_THROWS_AS(embed_text(cfg, params, "x", 3), std::invalid_argument);
    }
}

TEST_CASE("pad invariance for all pooling types") {
    for (Pooling p : {Pooling::mean, Pooling::first, Pooling::last, Pooling::attention}) {
        const EncoderConfig cfg = tiny_config(p);
        const NamedTensors params = init_params(cfg, 21);
        const TokenSeq short_seq = tokenize("pad invariance", 18);
        const TokenSeq long_seq = tokenize("pad invariance", 30);

        const Tensor ta = encode_tokens(cfg, params, short_seq);
        const Tensor tb = encode_tokens(cfg, params, long_seq);
        std::vector<bool> mask_a(static_cast<std::size_t>(short_seq.length()), false);
        for (int i = short_seq.valid_length(); i < short_seq.length(); ++i) mask_a[static_cast<std::size_t>(i)] = true;
        std::vector<bool> mask_b(static_cast<std::size_t>(long_seq.length()), false);
        for (int i = long_seq.valid_length(); i < long_seq.length(); ++i) mask_b[static_cast<std::size_t>(i)] = true;

        const Tensor pa = pool(cfg, params, ta, mask_a);
        const Tensor pb = pool(cfg, params, tb, mask_b);
        CHECK(testutil::max_abs_diff(pa, pb) < 1e-12);
    }
}

TEST_CASE("mean pooling of a single token returns its contextual vector") {
    const EncoderConfig cfg = tiny_config();
    const NamedTensors params = init_params(cfg, 23);
    const TokenSeq seq = tokenize("", 1);  // just the start marker
    const Tensor t = encode_tokens(cfg, params, seq);
    const Tensor pooled = pool(cfg, params, t, {false});
    for (int j = 0; j < cfg.d_model; ++j) CHECK(pooled.at(0, j) == t.at(0, j));
}

TEST_CASE("public pool over padded matrix equals the internal pipeline") {
    const EncoderConfig cfg = tiny_config();
    const NamedTensors params = init_params(cfg, 31);
    const std::string text = "integration of both paths";
    const TokenSeq seq = tokenize(text, cfg.max_seq_len);
    const Tensor t = encode_tokens(cfg, params, seq);
    std::vector<bool> mask(static_cast<std::size_t>(seq.length()), false);
    for (int i = seq.valid_length(); i < seq.length(); ++i) mask[static_cast<std::size_t>(i)] = true;
    const Tensor pooled = pool(cfg, params, t, mask);
    const Tensor projected = project(cfg, params, pooled);

    const Tensor direct = embed_text(cfg, params, text, cfg.d_out);
    const Tensor normalized = normalize_prefix_value(projected, cfg.d_out);
    CHECK(testutil::max_abs_diff(direct, normalized) < 1e-12);
}

TEST_CASE("zero-norm prefix is a contract error") {
    CHECK_THROWS_AS(normalize_prefix_value(Tensor::zeros(1, 4), 2), std::invalid_argument);
}
