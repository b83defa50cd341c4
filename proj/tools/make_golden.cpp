// Regenerates the committed golden fixtures: the toy weight store, a fixed
// input tensor, and the forward output the build under test must reproduce
// bit for bit. Run from the repo root:
//
//   ./build/make_golden tests/golden

#include <filesystem>
#include <iostream>

#include "cpat/model.hpp"
#include "cpat/serialize.hpp"

using namespace cpat;

int main(int argc, char** argv) {
    const std::string dir = argc > 1 ? argv[1] : "tests/golden";
    std::filesystem::create_directories(dir);

    const CPATConfig cfg = CPATConfig::toy();
    const WeightStore<double> store = init_weights<double>(cfg, 0);

    TensorD input({1, 3, 8, 8});
    Rng rng(1234);
    for (int64_t i = 0; i < input.numel(); ++i) input[i] = rng.uniform();

    const TensorD output = cpat_forward(input, store, cfg);

    io::save_store(dir + "/toy_weights.cpw", store);
    io::save_tensor(dir + "/toy_input.cpt", input);
    io::save_tensor(dir + "/toy_output.cpt", output);
    std::cout << "wrote " << dir << "/toy_weights.cpw, toy_input.cpt, toy_output.cpt\n"
              << "output shape " << shape_str(output.shape()) << "\n";
    return 0;
}
