#include "fisheye/cli.hpp"

int main(int argc, char** argv) { return fisheye::cli::run(argc, argv); }
