#include "foil/cli.hpp"

int main(int argc, char** argv) {
    return foil::cli::run(argc, argv);
}
