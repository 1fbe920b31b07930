/* resopt command-line driver. Links only the public C API. */
#include <resopt.h>

#include <stdio.h>
#include <stdlib.h>
#include <string.h>

static const char* usage =
    "usage: resopt <verb> [args]\n"
    "\n"
    "  run <config>            execute one run; writes run.log + checkpoint.txt\n"
    "  sweep <dir> [--replicas K]\n"
    "                          run every *.cfg in <dir> over K seeds (default 1)\n"
    "  compare <log>... --out <csv>\n"
    "                          merge run logs into one long-format CSV\n"
    "  stability <config>      twin-training stability experiment\n"
    "  bounds <config>         convergence-bound trace for a configured run\n"
    "  version                 print the library version\n"
    "\n"
    "  -o / --out-root <dir>   output root (default $RESOPT_OUT_ROOT or .)\n"
    "\n"
    "exit codes: 0 ok, 1 config error, 2 numerical failure\n";

static int exit_code(resopt_status st) {
  if (st == RESOPT_OK) return 0;
  if (st == RESOPT_ERR_NUMERIC) return 2;
  return 1;
}

static int finish(resopt_ctx* ctx, resopt_status st, const char* path) {
  if (st != RESOPT_OK) {
    fprintf(stderr, "resopt: %s\n", resopt_ctx_last_error(ctx));
  } else if (path && *path) {
    printf("%s\n", path);
  }
  resopt_ctx_free(ctx);
  return exit_code(st);
}

int main(int argc, char** argv) {
  if (argc < 2) {
    fputs(usage, stderr);
    return 1;
  }
  const char* verb = argv[1];
  if (strcmp(verb, "version") == 0) {
    printf("resopt %s\n", resopt_version());
    return 0;
  }
  if (strcmp(verb, "help") == 0 || strcmp(verb, "--help") == 0 || strcmp(verb, "-h") == 0) {
    fputs(usage, stdout);
    return 0;
  }

  const char* out_root = getenv("RESOPT_OUT_ROOT");
  const char* out_csv = NULL;
  int replicas = 1;
  const char* positional[256];
  int npos = 0;
  for (int i = 2; i < argc; ++i) {
    if (strcmp(argv[i], "-o") == 0 || strcmp(argv[i], "--out-root") == 0) {
      if (++i >= argc) {
        fprintf(stderr, "resopt: %s needs a value\n", argv[i - 1]);
        return 1;
      }
      out_root = argv[i];
    } else if (strcmp(argv[i], "--replicas") == 0) {
      if (++i >= argc) {
        fprintf(stderr, "resopt: --replicas needs a value\n");
        return 1;
      }
      replicas = atoi(argv[i]);
    } else if (strcmp(argv[i], "--out") == 0) {
      if (++i >= argc) {
        fprintf(stderr, "resopt: --out needs a value\n");
        return 1;
      }
      out_csv = argv[i];
    } else if (npos < 256) {
      positional[npos++] = argv[i];
    } else {
      fprintf(stderr, "resopt: too many arguments\n");
      return 1;
    }
  }

  resopt_ctx* ctx = resopt_ctx_new();
  if (!ctx) {
    fprintf(stderr, "resopt: out of memory\n");
    return 1;
  }
  char path[4096];
  path[0] = '\0';

  if (strcmp(verb, "run") == 0) {
    if (npos != 1) {
      fprintf(stderr, "resopt: run needs exactly one config file\n");
      resopt_ctx_free(ctx);
      return 1;
    }
    return finish(ctx, resopt_run_file(ctx, positional[0], out_root, path, sizeof path), path);
  }
  if (strcmp(verb, "sweep") == 0) {
    if (npos != 1) {
      fprintf(stderr, "resopt: sweep needs exactly one config directory\n");
      resopt_ctx_free(ctx);
      return 1;
    }
    return finish(ctx, resopt_sweep(ctx, positional[0], replicas, out_root, path, sizeof path),
                  path);
  }
  if (strcmp(verb, "compare") == 0) {
    if (npos < 1 || !out_csv) {
      fprintf(stderr, "resopt: compare needs logs and --out <csv>\n");
      resopt_ctx_free(ctx);
      return 1;
    }
    resopt_status st = resopt_compare(ctx, positional, npos, out_csv);
    return finish(ctx, st, st == RESOPT_OK ? out_csv : NULL);
  }
  if (strcmp(verb, "stability") == 0) {
    if (npos != 1) {
      fprintf(stderr, "resopt: stability needs exactly one config file\n");
      resopt_ctx_free(ctx);
      return 1;
    }
    return finish(ctx, resopt_stability(ctx, positional[0], out_root, path, sizeof path), path);
  }
  if (strcmp(verb, "bounds") == 0) {
    if (npos != 1) {
      fprintf(stderr, "resopt: bounds needs exactly one config file\n");
      resopt_ctx_free(ctx);
      return 1;
    }
    return finish(ctx, resopt_bounds(ctx, positional[0], out_root, path, sizeof path), path);
  }

  fprintf(stderr, "resopt: unknown verb '%s'\n\n%s", verb, usage);
  resopt_ctx_free(ctx);
  return 1;
}
