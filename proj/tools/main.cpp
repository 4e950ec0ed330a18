#include "bench.hpp"

int main(int argc, char** argv) { return dyntree::bench::main_cli(argc, argv); }
