#include "diesep/cli.hpp"

int main(int argc, char** argv) { return diesep::cli::run(argc, argv); }
