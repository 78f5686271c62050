#include "mclkit/cli.hpp"

int main(int argc, char** argv) { return mclkit::run_cli(argc, argv); }
