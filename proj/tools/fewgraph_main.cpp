#include "fewgraph/cli.hpp"

int main(int argc, char** argv) { return fewgraph::run_cli(argc, argv); }
