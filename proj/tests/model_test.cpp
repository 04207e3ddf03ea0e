#include <gtest/gtest.h>

#include <cmath>
#include <span>
#include <nlohmann/json.hpp>

#include "fgn/model.hpp"
#include "support/batches.hpp"
#include "support/gradcheck.hpp"

using namespace fgn;
using fgn::testing::gradcheck;
using fgn::testing::probe_sum;
using fgn::testing::random_batch;

namespace {

ModelConfig toy_without_dropout() {
    ModelConfig c = ModelConfig::toy();
    c.dropout_rate = 0.0;
    return c;
}

Tensor<double> ramp_history(std::size_t batch, std::size_t length, double start) {
    std::vector<double> values(batch * length);
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t t = 0; t < length; ++t) {
            values[b * length + t] = start + static_cast<double>(b) + static_cast<double>(t);
        }
    }
    return Tensor<double>({batch, length, 1}, std::move(values));
}

/// Writes through a handle copy; parameters share storage with the model.
std::span<double> values_of(const NamedParameter<double>& p) {
    Tensor<double> handle = p.tensor;
    return handle.mutable_data();
}

}  // namespace

TEST(ModelTest, DefaultsMatchFullSizeSetup) {
    const ModelConfig c;
    EXPECT_EQ(c.n_encoder_layers, 3u);
    EXPECT_EQ(c.n_decoder_layers, 2u);
    EXPECT_EQ(c.heads, 8u);
    EXPECT_EQ(c.d_model, 512u);
    EXPECT_EQ(c.d_ff, 2048u);
    EXPECT_EQ(c.positional_embedding, PositionalEmbedding::none);
    EXPECT_EQ(c.label_len, c.lookback / 2);
}

TEST(ModelTest, ToyForwardOnZerosIsFinite) {
    const ModelConfig c = ModelConfig::toy();
    auto model = build_model<float>(c, 1);
    ForecastBatch<float> batch;
    batch.encoder_input = Tensor<float>::zeros({3, 8, 40});
    batch.decoder_input = Tensor<float>::zeros({3, 8, 40});
    const auto y = model->forward(batch, false);
    ASSERT_EQ(y.shape(), (Shape{3, 4, 1}));
    for (float v : y.data()) {
        EXPECT_TRUE(std::isfinite(v));
    }
}

TEST(ModelTest, ParameterCountMatchesHandCount) {
    // Toy: d=16, d_ff=32, input 40, output 1, GLU k=3.
    const std::size_t embedding = 40 * 16 + 16;             // 656
    const std::size_t attention = 4 * 16 * 16;              // 1024, bias-free
    const std::size_t norm = 2 * 16;                        // 32
    const std::size_t ffn = 16 * 32 + 32 + 32 * 16 + 16;    // 1072
    const std::size_t glu = 2 * (3 * 16 * 16 + 16);         // 1568
    const std::size_t encoder_layer = attention + ffn + 2 * norm;                // 2160
    const std::size_t decoder_layer = 2 * attention + glu + ffn + 4 * norm;      // 4816
    const std::size_t projection = 16 + 1;
    const std::size_t expected = 2 * embedding + encoder_layer + decoder_layer + projection;
    EXPECT_EQ(expected, 8305u);

    ModelConfig c = ModelConfig::toy();
    EXPECT_EQ(build_model<float>(c, 1)->parameter_count(), expected);
    c.ablation = Ablation::dcf_only;
    EXPECT_EQ(build_model<float>(c, 1)->parameter_count(), expected - glu - norm);
    c.ablation = Ablation::glu_only;
    EXPECT_EQ(build_model<float>(c, 1)->parameter_count(), expected);
    c.variant = Variant::transformer;
    c.ablation = Ablation::glu_dcf;
    EXPECT_EQ(build_model<float>(c, 1)->parameter_count(), expected - glu - norm);
    c.variant = Variant::dlinear;
    EXPECT_EQ(build_model<float>(c, 1)->parameter_count(), 2u * (8 * 4 + 4));
    c.variant = Variant::nlinear;
    EXPECT_EQ(build_model<float>(c, 1)->parameter_count(), 8u * 4 + 4);
}

TEST(ModelTest, TransformerDiffersFromFocalGatedNet) {
    ModelConfig c = toy_without_dropout();
    const auto batch = random_batch<double>(c, 2, 5);
    const auto fgn_out = build_model<double>(c, 7)->forward(batch, false);
    c.variant = Variant::transformer;
    const auto tf_out = build_model<double>(c, 7)->forward(batch, false);
    double diff = 0.0;
    for (std::size_t i = 0; i < fgn_out.numel(); ++i) {
        diff = std::max(diff, std::abs(fgn_out.data()[i] - tf_out.data()[i]));
    }
    EXPECT_GT(diff, 1e-6);
}

TEST(ModelTest, SameSeedSameWeights) {
    const ModelConfig c = ModelConfig::toy();
    auto a = build_model<float>(c, 3);
    auto b = build_model<float>(c, 3);
    auto other = build_model<float>(c, 4);
    ASSERT_EQ(a->parameters().size(), b->parameters().size());
    bool any_difference = false;
    for (std::size_t i = 0; i < a->parameters().size(); ++i) {
        const auto& pa = a->parameters()[i].tensor.data();
        const auto& pb = b->parameters()[i].tensor.data();
        const auto& po = other->parameters()[i].tensor.data();
        EXPECT_TRUE(std::equal(pa.begin(), pa.end(), pb.begin()));
        any_difference |= !std::equal(pa.begin(), pa.end(), po.begin());
    }
    EXPECT_TRUE(any_difference);
}

TEST(ModelTest, DecoderIsCausal) {
    for (Ablation ablation : {Ablation::glu_dcf, Ablation::dcf_only, Ablation::glu_only}) {
        ModelConfig c = toy_without_dropout();
        c.ablation = ablation;
        auto model = build_model<double>(c, 11);
        auto* net = dynamic_cast<EncoderDecoderForecaster<double>*>(model.get());
        ASSERT_NE(net, nullptr);
        const auto batch = random_batch<double>(c, 1, 12);
        const auto base = net->decode_sequence(batch, false);
        for (std::size_t t = 0; t < c.decoder_length(); ++t) {
            auto perturbed = batch;
            perturbed.decoder_input = Tensor<double>(batch.decoder_input.shape(),
                                                     std::vector<double>(batch.decoder_input.data().begin(),
                                                                         batch.decoder_input.data().end()));
            for (std::size_t f = 0; f < c.input_dim; ++f) {
                perturbed.decoder_input.mutable_data()[t * c.input_dim + f] += 0.5;
            }
            const auto y = net->decode_sequence(perturbed, false);
            for (std::size_t s = 0; s < c.decoder_length(); ++s) {
                if (s < t) {
                    EXPECT_EQ(y.data()[s], base.data()[s]) << to_string(ablation) << " t=" << t << " s=" << s;
                }
            }
            EXPECT_NE(y.data()[t], base.data()[t]) << to_string(ablation) << " t=" << t;
        }
    }
}

TEST(ModelTest, ForecastIgnoresTargets) {
    const ModelConfig c = toy_without_dropout();
    auto model = build_model<double>(c, 13);
    auto batch = random_batch<double>(c, 2, 14);
    const auto base = model->forward(batch, false);
    Rng rng(15);
    batch.target = Tensor<double>::uniform(batch.target.shape(), -50, 50, rng);
    const auto y = model->forward(batch, false);
    for (std::size_t i = 0; i < y.numel(); ++i) {
        EXPECT_EQ(y.data()[i], base.data()[i]);
    }
}

TEST(ModelTest, OutputShapeGrid) {
    for (Variant variant : {Variant::focalgatednet, Variant::transformer, Variant::dlinear, Variant::nlinear}) {
        for (std::size_t horizon : {1u, 3u, 6u}) {
            for (std::size_t output_dim : {1u, 2u}) {
                for (PositionalEmbedding pe : {PositionalEmbedding::none, PositionalEmbedding::sinusoidal}) {
                    ModelConfig c = ModelConfig::toy();
                    c.variant = variant;
                    c.horizon = horizon;
                    c.output_dim = output_dim;
                    c.input_dim = 5;
                    c.positional_embedding = pe;
                    c.input_embedding = pe == PositionalEmbedding::none ? InputEmbedding::dense : InputEmbedding::conv;
                    auto model = build_model<float>(c, 1);
                    const auto batch = random_batch<float>(c, 2, 2);
                    EXPECT_EQ(model->forward(batch, true).shape(), (Shape{2, horizon, output_dim}))
                        << to_string(variant);
                }
            }
        }
    }
}

TEST(ModelTest, LayerInventoryPerAblation) {
    ModelConfig c = ModelConfig::toy();
    const std::vector<std::string> encoder = {"encoder.embedding:dense",
                                              "encoder.layers.0.self_attention:multi_head_attention",
                                              "encoder.layers.0.ffn", "decoder.embedding:dense"};
    auto expect_inventory = [&](const std::vector<std::string>& decoder) {
        auto expected = encoder;
        expected.insert(expected.end(), decoder.begin(), decoder.end());
        expected.push_back("projection");
        EXPECT_EQ(build_model<float>(c, 1)->layer_inventory(), expected);
    };
    expect_inventory({"decoder.layers.0.self_attention:dcf_attention", "decoder.layers.0.cross_attention:dcf_attention",
                      "decoder.layers.0.glu", "decoder.layers.0.ffn"});
    c.ablation = Ablation::dcf_only;
    expect_inventory({"decoder.layers.0.self_attention:dcf_attention", "decoder.layers.0.cross_attention:dcf_attention",
                      "decoder.layers.0.ffn"});
    c.ablation = Ablation::glu_only;
    expect_inventory({"decoder.layers.0.self_attention:multi_head_attention",
                      "decoder.layers.0.cross_attention:multi_head_attention", "decoder.layers.0.glu",
                      "decoder.layers.0.ffn"});
    c.variant = Variant::transformer;
    c.ablation = Ablation::glu_dcf;
    expect_inventory({"decoder.layers.0.self_attention:multi_head_attention",
                      "decoder.layers.0.cross_attention:multi_head_attention", "decoder.layers.0.ffn"});
}

TEST(ModelTest, GluOnlyWithZeroGluUpdateMatchesTransformerPath) {
    // With the GLU linear branch zeroed, the GLU sublayer reduces to LayerNorm(x) with unit gain,
    // so glu_only equals the transformer path followed by an extra normalization per decoder layer.
    ModelConfig c = toy_without_dropout();
    c.ablation = Ablation::glu_only;
    auto glu_only = build_model<double>(c, 21);
    for (auto& p : glu_only->parameters()) {
        if (p.name.find(".glu.linear") != std::string::npos) {
            for (auto& v : values_of(p)) {
                v = 0.0;
            }
        }
    }
    c.variant = Variant::transformer;
    c.ablation = Ablation::glu_dcf;
    auto transformer = build_model<double>(c, 99);
    // Copy shared weights by name.
    for (auto& p : transformer->parameters()) {
        for (const auto& q : glu_only->parameters()) {
            if (q.name == p.name) {
                std::copy(q.tensor.data().begin(), q.tensor.data().end(), values_of(p).begin());
            }
        }
    }
    const auto batch = random_batch<double>(c, 2, 22);
    const auto a = glu_only->forward(batch, false);
    const auto b = transformer->forward(batch, false);
    // The cross output is already normalized; a second LayerNorm changes it only by the epsilon term.
    for (std::size_t i = 0; i < a.numel(); ++i) {
        EXPECT_NEAR(a.data()[i], b.data()[i], 1e-4);
    }
}

TEST(ModelTest, FullModelGradientsMatchFiniteDifferences) {
    for (Ablation ablation : {Ablation::glu_dcf, Ablation::dcf_only, Ablation::glu_only}) {
        ModelConfig c = toy_without_dropout();
        c.ablation = ablation;
        auto model = build_model<double>(c, 31);
        std::vector<Tensor<double>> params;
        for (const auto& p : model->parameters()) {
            params.push_back(p.tensor);
        }
        const auto batch = random_batch<double>(c, 2, 32);
        const auto result = gradcheck([&] { return probe_sum(model->forward(batch, false)); }, params, 1e-4);
        EXPECT_EQ(result.checked, model->parameter_count());
        EXPECT_LE(result.max_rel_error, 1e-3) << to_string(ablation) << ": " << result.worst;
    }
}

TEST(ModelTest, EmbeddingBiasesStartNonZero) {
    auto model = build_model<float>(ModelConfig::toy(), 1);
    for (const auto& p : model->parameters()) {
        if (p.name == "decoder.embedding.bias" || p.name == "encoder.embedding.bias") {
            for (float v : p.tensor.data()) {
                EXPECT_NE(v, 0.0f) << p.name;
            }
        } else if (p.name.ends_with(".bias")) {
            for (float v : p.tensor.data()) {
                EXPECT_EQ(v, 0.0f) << p.name;
            }
        }
    }
}

TEST(ModelTest, ConfigErrors) {
    ModelConfig c = ModelConfig::toy();
    c.heads = 3;
    EXPECT_THROW(build_model<float>(c, 1), ConfigError);
    c = ModelConfig::toy();
    c.label_len = 9;
    EXPECT_THROW(build_model<float>(c, 1), ConfigError);
    c = ModelConfig::toy();
    c.horizon = 0;
    EXPECT_THROW(build_model<float>(c, 1), ConfigError);
    c = ModelConfig::toy();
    c.variant = Variant::dlinear;
    c.lookback = 1;
    c.label_len = 0;
    EXPECT_THROW(build_model<float>(c, 1), ConfigError);
    c = ModelConfig::toy();
    c.dropout_rate = 1.0;
    EXPECT_THROW(build_model<float>(c, 1), ConfigError);
}

TEST(ModelTest, ConfigJsonRoundTripAndUnknownKeys) {
    ModelConfig c = ModelConfig::toy();
    c.variant = Variant::transformer;
    c.mask_mode = MaskMode::literal_post_softmax;
    EXPECT_EQ(ModelConfig::from_json(c.to_json()), c);
    EXPECT_THROW(ModelConfig::from_json(nlohmann::json{{"d_modle", 16}}), ConfigError);
    EXPECT_THROW(ModelConfig::from_json(nlohmann::json{{"variant", "lstm"}}), ConfigError);
    EXPECT_THROW(ModelConfig::from_json(nlohmann::json{{"d_model", "big"}}), ConfigError);
}

TEST(ModelTest, WrongInputWidthIsDimensionError) {
    const ModelConfig c = ModelConfig::toy();
    auto model = build_model<float>(c, 1);
    ForecastBatch<float> batch;
    batch.encoder_input = Tensor<float>::zeros({1, 8, 39});
    batch.decoder_input = Tensor<float>::zeros({1, 8, 39});
    EXPECT_THROW(model->forward(batch, false), DimensionError);
}

// Linear baselines

TEST(BaselineTest, MovingAverageWindowClamp) {
    EXPECT_EQ(effective_moving_average_window(25, 128), 25u);
    EXPECT_EQ(effective_moving_average_window(25, 8), 7u);
    EXPECT_EQ(effective_moving_average_window(4, 100), 3u);
    EXPECT_EQ(effective_moving_average_window(25, 1), 1u);
}

TEST(BaselineTest, ConstantSeriesTrendIsExact) {
    const Tensor<double> x = Tensor<double>::full({2, 30, 3}, 4.25);
    const auto parts = moving_average_decompose(x, 25);
    for (std::size_t i = 0; i < x.numel(); ++i) {
        EXPECT_EQ(parts.trend.data()[i], 4.25);
        EXPECT_EQ(parts.seasonal.data()[i], 0.0);
    }
}

TEST(BaselineTest, MovingAverageMatchesDirectLoop) {
    Rng rng(40);
    const auto x = Tensor<double>::uniform({1, 10, 1}, -1, 1, rng);
    const auto parts = moving_average_decompose(x, 5);
    for (int t = 0; t < 10; ++t) {
        double total = 0.0;
        for (int j = -2; j <= 2; ++j) {
            total += x.data()[static_cast<std::size_t>(std::clamp(t + j, 0, 9))];
        }
        EXPECT_NEAR(parts.trend.data()[static_cast<std::size_t>(t)], total / 5.0, 1e-15);
    }
}

TEST(BaselineTest, ZeroDLinearForecastsZero) {
    const DLinearParams<double> params{{Tensor<double>::zeros({8, 3}), Tensor<double>::zeros({3})},
                                       {Tensor<double>::zeros({8, 3}), Tensor<double>::zeros({3})},
                                       25};
    Rng rng(41);
    const auto y = dlinear_forward(Tensor<double>::uniform({2, 8, 2}, -5, 5, rng), params);
    ASSERT_EQ(y.shape(), (Shape{2, 3, 2}));
    for (double v : y.data()) {
        EXPECT_EQ(v, 0.0);
    }
}

TEST(BaselineTest, ZeroNLinearRepeatsLastValue) {
    const Linear<double> map{Tensor<double>::zeros({8, 3}), Tensor<double>::zeros({3})};
    Rng rng(42);
    for (int trial = 0; trial < 10; ++trial) {
        const auto x = Tensor<double>::uniform({2, 8, 2}, -100, 100, rng);
        const auto y = nlinear_forward(x, map);
        for (std::size_t b = 0; b < 2; ++b) {
            for (std::size_t h = 0; h < 3; ++h) {
                for (std::size_t ch = 0; ch < 2; ++ch) {
                    EXPECT_EQ(y.at({b, h, ch}), x.at({b, 7, ch}));
                }
            }
        }
    }
}

TEST(BaselineTest, NLinearOnConstantSeriesReturnsConstant) {
    Rng rng(43);
    const Linear<double> map{Tensor<double>::uniform({8, 3}, -1, 1, rng), Tensor<double>::zeros({3})};
    const auto y = nlinear_forward(Tensor<double>::full({1, 8, 1}, -2.5), map);
    for (double v : y.data()) {
        EXPECT_EQ(v, -2.5);
    }
}

TEST(BaselineTest, LinearBaselinesHaveExactGradients) {
    Rng rng(44);
    auto x = Tensor<double>::uniform({2, 9, 2}, -1, 1, rng);
    DLinearParams<double> params{{Tensor<double>::uniform({9, 3}, -1, 1, rng), Tensor<double>::uniform({3}, -1, 1, rng)},
                                 {Tensor<double>::uniform({9, 3}, -1, 1, rng), Tensor<double>::uniform({3}, -1, 1, rng)},
                                 5};
    auto r = gradcheck([&] { return probe_sum(dlinear_forward(x, params)); },
                       {x, params.trend.weight, params.trend.bias, params.seasonal.weight, params.seasonal.bias});
    EXPECT_LE(r.max_rel_error, 1e-5) << r.worst;
    r = gradcheck([&] { return probe_sum(nlinear_forward(x, params.trend)); }, {x, params.trend.weight, params.trend.bias});
    EXPECT_LE(r.max_rel_error, 1e-5) << r.worst;
}

TEST(BaselineTest, ForecastersRequireTargetHistory) {
    ModelConfig c = ModelConfig::toy();
    c.variant = Variant::nlinear;
    auto model = build_model<float>(c, 1);
    auto batch = random_batch<float>(c, 1, 1);
    batch.target_history = Tensor<float>();
    EXPECT_THROW(model->forward(batch, false), DimensionError);
}

TEST(BaselineTest, ForecasterUsesRampHistory) {
    ModelConfig c = ModelConfig::toy();
    c.variant = Variant::nlinear;
    auto model = build_model<double>(c, 1);
    for (auto& p : model->parameters()) {
        for (auto& v : values_of(p)) {
            v = 0.0;
        }
    }
    auto batch = random_batch<double>(c, 2, 1);
    batch.target_history = ramp_history(2, 8, 10.0);
    const auto y = model->forward(batch, false);
    EXPECT_EQ(y.at({0, 2, 0}), 17.0);
    EXPECT_EQ(y.at({1, 0, 0}), 18.0);
}
