#include "cli.hpp"

int main(int argc, char** argv) { return dlsr::cli::dispatch(argc, argv); }
