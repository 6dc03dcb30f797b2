#include <doctest.h>

#include <thread>

#include "pefnn/fft.hpp"
#include "pefnn/model.hpp"
#include "test_util.hpp"

using namespace pefnn;
using namespace pefnn::test;

TEST_SUITE("concurrency") {

TEST_CASE("transforms are pure and safe to run from many threads") {
    // distinct sizes force concurrent plan-cache construction
    std::vector<Field> inputs;
    for (int n : {12, 15, 20, 24, 33, 40}) inputs.push_back(random_field(1, 1, n, n, n));

    std::vector<ComplexField> serial;
    for (const auto& f : inputs) serial.push_back(fft2(f));

    std::vector<ComplexField> parallel(inputs.size());
    std::vector<std::thread> threads;
    for (std::size_t i = 0; i < inputs.size(); ++i)
        threads.emplace_back([&, i] { parallel[i] = fft2(inputs[i]); });
    for (auto& t : threads) t.join();

    for (std::size_t i = 0; i < inputs.size(); ++i)
        for (std::size_t j = 0; j < serial[i].data.size(); ++j)
            CHECK(parallel[i].data[j] == serial[i].data[j]);
}

TEST_CASE("forward and backward over distinct tapes run concurrently") {
    ModelConfig cfg;
    cfg.n_layers = 2;
    cfg.d_z = 3;
    cfg.m = 2;
    Model model(cfg);
    model.init_params(7);

    std::vector<Field> inputs, cots;
    for (int k = 0; k < 4; ++k) {
        inputs.push_back(random_field(1, 1, 10, 10, 100 + k));
        cots.push_back(random_field(1, 1, 10, 10, 200 + k));
    }

    std::vector<std::vector<double>> serial_grads;
    for (int k = 0; k < 4; ++k) {
        StepTape tape;
        model.step(inputs[k], &tape);
        std::vector<double> g(model.params().size(), 0.0);
        model.backward(tape, cots[k], g);
        serial_grads.push_back(std::move(g));
    }

    std::vector<std::vector<double>> parallel_grads(4);
    std::vector<std::thread> threads;
    for (int k = 0; k < 4; ++k)
        threads.emplace_back([&, k] {
            StepTape tape;
            model.step(inputs[k], &tape);
            std::vector<double> g(model.params().size(), 0.0);
            model.backward(tape, cots[k], g);
            parallel_grads[k] = std::move(g);
        });
    for (auto& t : threads) t.join();

    for (int k = 0; k < 4; ++k) CHECK(parallel_grads[k] == serial_grads[k]);
}

} // TEST_SUITE
