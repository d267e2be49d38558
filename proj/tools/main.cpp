#include "glf/cli.hpp"

int main(int argc, char** argv) { return glf::cli::run(argc, argv); }
