#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <variant>

#include "twostream/gradcheck.hpp"
#include "twostream/model.hpp"
#include "twostream/rng.hpp"

using namespace twostream;

TEST_CASE("toy layouts follow the two-conv, two-fc shape with stream ratios", "[model]") {
    ModelConfig spatial = toy_config(Stream::spatial, 101, 224, 7);
    const auto& layers = spatial.layout.layers;
    REQUIRE(layers.size() == 11);
    CHECK(std::get<ConvLayer>(layers[0]).in_ch == 3);
    CHECK(std::get<ConvLayer>(layers[0]).out_ch == 8);
    CHECK(std::holds_alternative<ReluLayer>(layers[1]));
    CHECK(std::get<PoolLayer>(layers[2]).window == 2);
    CHECK(std::get<ConvLayer>(layers[3]).out_ch == 16);
    CHECK(std::get<DropoutLayer>(layers[6]).ratio == 0.9);
    CHECK(std::get<LinearLayer>(layers[7]).in_dim == 16 * 56 * 56);
    CHECK(std::get<DropoutLayer>(layers[9]).ratio == 0.9);
    CHECK(std::get<LinearLayer>(layers[10]).out_dim == 101);

    ModelConfig temporal = toy_config(Stream::temporal, 101, 224, 7);
    CHECK(std::get<ConvLayer>(temporal.layout.layers[0]).in_ch == 20);
    CHECK(std::get<DropoutLayer>(temporal.layout.layers[6]).ratio == 0.9);
    CHECK(std::get<DropoutLayer>(temporal.layout.layers[9]).ratio == 0.8);
}

TEST_CASE("stream and channel count must agree", "[model]") {
    ModelConfig bad = toy_config(Stream::spatial, 4, 16, 0);
    bad.in_channels = 20;
    CHECK_THROWS_AS(build_toy_model(bad), ValueError);
}

TEST_CASE("build_toy_model is seed-deterministic", "[model]") {
    ModelConfig cfg = toy_config(Stream::spatial, 4, 16, 99, 0.5, 0.5);
    ToyModel a = build_toy_model(cfg);
    ToyModel b = build_toy_model(cfg);
    for (std::size_t i = 0; i < a.params.size(); ++i) {
        CHECK(a.params[i].weights.values() == b.params[i].weights.values());
        CHECK(a.params[i].bias.values() == b.params[i].bias.values());
    }
    cfg.seed = 100;
    ToyModel c = build_toy_model(cfg);
    CHECK(a.params[0].weights.values() != c.params[0].weights.values());
}

TEST_CASE("layout validation names the broken layer", "[model]") {
    LayerLayout layout;
    layout.layers.push_back(ConvLayer{3, 8, 3, 1, 1});
    layout.layers.push_back(LinearLayer{999, 4});
    REQUIRE_THROWS_MATCHES(validate_layout(layout, 3, 16, 16), ShapeError,
                           Catch::Matchers::MessageMatches(
                               Catch::Matchers::ContainsSubstring("layer 1")));
}

TEST_CASE("forward pass on 224-size inputs yields num_classes scores", "[model]") {
    for (Stream stream : {Stream::spatial, Stream::temporal}) {
        ModelConfig cfg = toy_config(stream, 101, 224, 3);
        ToyModel model = build_toy_model(cfg);
        Tensor input({1, cfg.in_channels, 224, 224});
        ForwardTrace trace = model_forward(model, input, DropoutPlan{});
        CHECK(trace.logits.shape() == Shape{1, 101});
    }
}

TEST_CASE("adapt_first_layer averages and replicates", "[model]") {
    SECTION("identical slices are preserved") {
        Tensor w({2, 3, 2, 2});
        CounterRng rng(1);
        for (std::size_t k = 0; k < 2; ++k)
            for (std::size_t y = 0; y < 2; ++y)
                for (std::size_t x = 0; x < 2; ++x) {
                    double v = rng.next_normal();
                    for (std::size_t c = 0; c < 3; ++c) w.at(k, c, y, x) = v;
                }
        Tensor adapted = adapt_first_layer(w, 20);
        REQUIRE(adapted.shape() == Shape{2, 20, 2, 2});
        for (std::size_t k = 0; k < 2; ++k)
            for (std::size_t c = 0; c < 20; ++c)
                for (std::size_t y = 0; y < 2; ++y)
                    for (std::size_t x = 0; x < 2; ++x)
                        CHECK(adapted.at(k, c, y, x) == w.at(k, 0, y, x));
    }
    SECTION("slices 0.3, 0.6, 0.9 average to 0.6 across 20 copies") {
        Tensor w({1, 3, 1, 1}, {0.3, 0.6, 0.9});
        Tensor adapted = adapt_first_layer(w, 20);
        REQUIRE(adapted.shape() == Shape{1, 20, 1, 1});
        for (std::size_t c = 0; c < 20; ++c)
            CHECK_THAT(adapted.at(0, c, 0, 0), Catch::Matchers::WithinAbs(0.6, 1e-15));
    }
    SECTION("output is exactly channel-constant") {
        CounterRng rng(2);
        Tensor w({4, 3, 3, 3});
        for (std::size_t i = 0; i < w.size(); ++i) w[i] = rng.next_normal();
        Tensor adapted = adapt_first_layer(w, 20);
        for (std::size_t k = 0; k < 4; ++k)
            for (std::size_t c = 1; c < 20; ++c)
                for (std::size_t y = 0; y < 3; ++y)
                    for (std::size_t x = 0; x < 3; ++x)
                        REQUIRE(adapted.at(k, c, y, x) == adapted.at(k, 0, y, x));
    }
    SECTION("T=C with equal slices is the identity") {
        Tensor w({1, 3, 1, 1}, {0.4, 0.4, 0.4});
        Tensor adapted = adapt_first_layer(w, 3);
        CHECK(adapted.values() == w.values());
    }
    SECTION("responses to a constant input scale by 20/3") {
        CounterRng rng(3);
        Tensor w({5, 3, 3, 3});
        for (std::size_t i = 0; i < w.size(); ++i) w[i] = rng.next_normal();
        Tensor adapted = adapt_first_layer(w, 20);

        Tensor in3 = Tensor::full({1, 3, 5, 5}, 1.0);
        Tensor in20 = Tensor::full({1, 20, 5, 5}, 1.0);
        Tensor out3 = conv2d_forward(in3, ConvParams{w, Tensor({5}), 1, 0});
        Tensor out20 = conv2d_forward(in20, ConvParams{adapted, Tensor({5}), 1, 0});
        REQUIRE(out3.shape() == out20.shape());
        for (std::size_t i = 0; i < out3.size(); ++i) {
            CHECK_THAT(out20[i], Catch::Matchers::WithinRel(out3[i] * 20.0 / 3.0, 1e-12));
        }
    }
}

TEST_CASE("param_count matches closed forms", "[model]") {
    SECTION("empty layout counts zero") {
        CHECK(param_count(LayerLayout{}).total == 0);
    }
    SECTION("single linear 4096 -> 101") {
        LayerLayout layout;
        layout.layers.push_back(LinearLayer{4096, 101});
        CHECK(param_count(layout).total == 413797);
    }
    SECTION("vgg16 layout: fc6 block and fc-dominant split") {
        LayerLayout vgg = vgg16_layout(101);
        ParamCounts counts = param_count(vgg);
        // find the first linear layer's count
        std::size_t fc6 = 0;
        for (std::size_t i = 0; i < vgg.layers.size(); ++i) {
            if (std::holds_alternative<LinearLayer>(vgg.layers[i])) {
                fc6 = counts.per_layer[i];
                break;
            }
        }
        CHECK(fc6 == 102764544);
        CHECK(counts.conv == 14714688);
        CHECK(counts.linear == 119959653);
        CHECK(counts.total == 134674341);
        CHECK(static_cast<double>(counts.linear) / static_cast<double>(counts.total) > 0.85);
    }
}

TEST_CASE("whole-model analytic gradients match finite differences", "[model]") {
    ModelConfig cfg = toy_config(Stream::spatial, 3, 8, 11, 0.5, 0.4,
                                 ToyDims{2, 2, 4});
    ToyModel model = build_toy_model(cfg);
    CounterRng rng(21);
    Tensor batch({2, 3, 8, 8});
    for (std::size_t i = 0; i < batch.size(); ++i) batch[i] = rng.next_unit() * 2.0 - 1.0;
    std::vector<std::size_t> labels{0, 2};
    DropoutPlan plan{true, 77, 3, 0};

    ForwardTrace trace = model_forward(model, batch, plan);
    SoftmaxLoss loss = softmax_cross_entropy(trace.logits, labels);
    GradSet grads = model_backward(model, trace, loss.grad_logits);

    auto loss_with_model = [&](const ToyModel& m) {
        ForwardTrace t = model_forward(m, batch, plan);
        return softmax_cross_entropy(t.logits, labels).loss;
    };

    for (std::size_t l = 0; l < model.params.size(); ++l) {
        if (!model.params[l].has_params()) continue;
        Tensor fd_w = finite_diff_grad(
            [&](const Tensor& w) {
                ToyModel probe = model;
                probe.params[l].weights = w;
                return loss_with_model(probe);
            },
            model.params[l].weights);
        INFO("layer " << l << " weights");
        CHECK(relative_gradient_error(grads.grads[l].weights, fd_w) < 1e-6);

        Tensor fd_b = finite_diff_grad(
            [&](const Tensor& b) {
                ToyModel probe = model;
                probe.params[l].bias = b;
                return loss_with_model(probe);
            },
            model.params[l].bias);
        INFO("layer " << l << " bias");
        CHECK(relative_gradient_error(grads.grads[l].bias, fd_b) < 1e-6);
    }
}

TEST_CASE("checkpoints round-trip through save and load", "[model]") {
    auto dir = std::filesystem::temp_directory_path() / "twostream_tests" / "ckpt";
    std::filesystem::remove_all(dir);
    ModelConfig cfg = toy_config(Stream::temporal, 5, 16, 123);
    ToyModel model = build_toy_model(cfg);
    save_model(model, dir);
    ToyModel back = load_model(dir);
    CHECK(back.cfg.stream == model.cfg.stream);
    CHECK(back.cfg.num_classes == model.cfg.num_classes);
    CHECK(back.cfg.input_hw == model.cfg.input_hw);
    REQUIRE(back.params.size() == model.params.size());
    for (std::size_t i = 0; i < model.params.size(); ++i) {
        CHECK(back.params[i].weights.values() == model.params[i].weights.values());
        CHECK(back.params[i].bias.values() == model.params[i].bias.values());
    }
    Tensor input({1, 20, 16, 16});
    CHECK(model_forward(model, input, DropoutPlan{}).logits.values() ==
          model_forward(back, input, DropoutPlan{}).logits.values());
}
