#include "endocss/cli.hpp"

int main(int argc, char** argv) { return endocss::run_cli(argc, argv); }
