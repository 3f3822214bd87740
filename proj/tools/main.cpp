#include "hsml/cli.hpp"

int main(int argc, char** argv) { return hsml::cli::run(argc, argv); }
