#include "ultranerf/cli.hpp"

int main(int argc, char** argv) { return unerf::cli::dispatch(argc, argv); }
