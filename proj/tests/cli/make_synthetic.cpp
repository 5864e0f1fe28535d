// Writes a small synthetic MNIST-like dataset for the command-line tests.

#include <iostream>

#include "../support.hpp"

int main(int argc, char** argv) {
    if (argc != 2) {
        std::cerr << "usage: make_synthetic <dir>\n";
        return 2;
    }
    testing::write_synthetic_mnist(argv[1], 600, 200, 1);
    return 0;
}
