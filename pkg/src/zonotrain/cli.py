"""Command-line front end: train / retrain / attack / verify / report.

Every command is driven by a JSON config file; ``--seed`` and ``--out``
override the config's fields.  Outputs land in the run directory:
``report.json`` (machine-readable summary), ``epochs.csv`` (loss traces),
``checkpoint.manifest.json`` + ``checkpoint.weights.bin``, and for the
attack command ``adv_<i>.pgm`` / ``adv_<i>.npy`` dumps.

Exit codes: 0 ok, 2 config problem, 3 numeric failure, 4 unsupported op.
"""

import argparse
import csv
import json
import os
import sys

import numpy as np

from .architectures import build_architecture
from .autodiff import gradient
from .errors import (CheckpointError, ConfigError, DataFormatError,
                     NumericError, UnsupportedOpError, ZonotrainError)
from .model_io import (load_digits_dataset, load_model, mnist_dataset,
                       save_model, synth_blobs, write_pgm)
from .training import (DOMAINS, TrainConfig, evaluate, one_hot, pgd_attack,
                       train)
from .transform import check_graph_supported

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_UNSUPPORTED = 0, 2, 3, 4

CONFIG_VERSION = 1

_TRAIN_KEYS = {"epochs", "batch_size", "learning_rate", "lam", "l2",
               "adversary_kind", "pgd_steps", "pgd_step_size"}


def load_config(path):
    try:
        with open(path) as f:
            config = json.load(f)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}")
    if not isinstance(config, dict):
        raise ConfigError("config root must be a JSON object")
    if config.get("version", CONFIG_VERSION) != CONFIG_VERSION:
        raise ConfigError(f"unsupported config version {config.get('version')!r}")
    return config


def build_dataset(spec, seed):
    spec = dict(spec or {})
    kind = spec.pop("kind", "digits")
    spec.setdefault("seed", seed)
    if kind == "digits":
        return load_digits_dataset(
            train_limit=spec.get("train_limit"),
            test_limit=spec.get("test_limit", 500),
            upscale=spec.get("upscale", 1), seed=spec["seed"])
    if kind == "mnist":
        if "dir" in spec:
            d = spec["dir"]
            paths = [os.path.join(d, n) for n in (
                "train-images-idx3-ubyte", "train-labels-idx1-ubyte",
                "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte")]
        else:
            try:
                paths = [spec[k] for k in ("train_images", "train_labels",
                                           "test_images", "test_labels")]
            except KeyError as exc:
                raise ConfigError(f"mnist dataset spec missing {exc}")
        return mnist_dataset(*paths, train_limit=spec.get("train_limit"),
                             test_limit=spec.get("test_limit"))
    if kind == "blobs":
        return synth_blobs(spec["seed"], spec.get("n_per_class", 100),
                           spec.get("classes", 3), spec.get("dim", 8),
                           spec.get("separation", 6.0))
    raise ConfigError(f"unknown dataset kind {kind!r}")


def train_config(config, seed):
    t = dict(config.get("train", {}))
    unknown = set(t) - _TRAIN_KEYS
    if unknown:
        raise ConfigError(f"unknown train config keys: {sorted(unknown)}")
    p = dict(config.get("property", {}))
    kind = p.pop("kind", "ball_demoted")
    epsilon = p.pop("epsilon", 0.1)
    return TrainConfig(
        epochs=t.get("epochs", 20), batch_size=t.get("batch_size", 50),
        learning_rate=t.get("learning_rate", 1e-3), lam=t.get("lam", 0.1),
        l2=t.get("l2", 0.01), epsilon=epsilon, property_kind=kind,
        property_params=p, domain=config.get("domain", "box"),
        adversary_kind=t.get("adversary_kind", "farthest_vertex"),
        seed=seed, pgd_steps=t.get("pgd_steps", 20),
        pgd_step_size=t.get("pgd_step_size"),
    ).validate()


def require_supported(model, cfg):
    bad = check_graph_supported(model.graph, DOMAINS[cfg.domain], [model.logits])
    if bad:
        raise UnsupportedOpError(", ".join(bad), DOMAINS[cfg.domain])


def write_report(out, payload):
    path = os.path.join(out, "report.json")
    with open(path, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")
    return path


def write_epochs_csv(out, history):
    path = os.path.join(out, "epochs.csv")
    cols = ["epoch", "lam", "loss", "ce_clean", "ce_adv", "reg"]
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=cols)
        w.writeheader()
        for row in history:
            w.writerow({k: row.get(k, 0.0) for k in cols})
    return path


def _echo(config, command, seed, out):
    echo = dict(config)
    echo.update({"command": command, "seed": seed, "out": out})
    return echo


def cmd_train(config, seed, out):
    if "architecture" not in config:
        raise ConfigError("train requires an 'architecture' name")
    data = build_dataset(config.get("dataset"), seed)
    cfg = train_config(config, seed)
    model = build_architecture(config["architecture"], data.x_train.shape[1:],
                               data.classes, seed=seed)
    if cfg.lam > 0:
        require_supported(model, cfg)
    metrics, history = train(model, data, cfg)
    save_model(model, os.path.join(out, "checkpoint"))
    write_epochs_csv(out, history)
    write_report(out, {"config": _echo(config, "train", seed, out),
                       "final": metrics.to_dict() | {"per_epoch": history},
                       "checkpoint": os.path.join(out, "checkpoint")})
    return EXIT_OK


def cmd_retrain(config, seed, out):
    if "checkpoint" not in config:
        raise ConfigError("retrain requires a 'checkpoint' path prefix")
    model = load_model(config["checkpoint"])
    data = build_dataset(config.get("dataset"), seed)
    cfg = train_config(config, seed)
    require_supported(model, cfg)
    before = evaluate(model, data, cfg)
    metrics, history = train(model, data, cfg)
    save_model(model, os.path.join(out, "checkpoint"))
    write_epochs_csv(out, history)
    write_report(out, {"config": _echo(config, "retrain", seed, out),
                       "before": before.to_dict(),
                       "final": metrics.to_dict() | {"per_epoch": history},
                       "checkpoint": os.path.join(out, "checkpoint")})
    return EXIT_OK


def cmd_verify(config, seed, out):
    if "checkpoint" not in config:
        raise ConfigError("verify requires a 'checkpoint' path prefix")
    model = load_model(config["checkpoint"])
    data = build_dataset(config.get("dataset"), seed)
    cfg = train_config(config, seed)
    require_supported(model, cfg)
    metrics = evaluate(model, data, cfg)
    write_report(out, {"config": _echo(config, "verify", seed, out),
                       "final": metrics.to_dict()})
    return EXIT_OK


def _structured_attack(model, objective, prop, x0, y1h, steps, step_size):
    """Projected gradient over generator coefficients theta in [-1, 1]^e.

    The perturbation stays an exact linear combination of the property's
    generators by construction: x = x0 + eps * sum_k theta_k W_k.
    """
    g = model.graph
    W = prop.generators(x0.shape[1:])
    e = W.shape[0]
    if e == 0:
        return x0.copy(), np.zeros(0)
    step_size = 0.25 if step_size is None else step_size
    feat_axes = tuple(range(1, x0.ndim))
    theta = np.zeros(e)
    best_theta, best_l = theta, -np.inf
    for _ in range(int(steps)):
        x = x0 + prop.epsilon * np.tensordot(theta, W, axes=1)[None]
        grads = gradient(g, objective.ce_sum, [model.x],
                         {model.x: x, objective.labels: y1h})
        g_theta = prop.epsilon * np.tensordot(W, grads[model.x][0], axes=W.ndim - 1)
        theta = np.clip(theta + step_size * np.sign(g_theta), -1.0, 1.0)
        l, = g.evaluate({model.x: x0 + prop.epsilon * np.tensordot(theta, W, axes=1)[None],
                         objective.labels: y1h}, [objective.ce_sum])
        if float(l) > best_l:
            best_l, best_theta = float(l), theta.copy()
    return x0 + prop.epsilon * np.tensordot(best_theta, W, axes=1)[None], best_theta


def cmd_attack(config, seed, out):
    if "checkpoint" not in config:
        raise ConfigError("attack requires a 'checkpoint' path prefix")
    model = load_model(config["checkpoint"])
    data = build_dataset(config.get("dataset"), seed)
    cfg = train_config(config, seed)
    prop = cfg.make_property()
    aspec = dict(config.get("attack", {}))
    limit = int(aspec.get("limit", 100))
    max_flips = aspec.get("max_flips")
    objective = model.eval_head()
    g = model.graph

    structured = hasattr(prop, "generators") and not prop.contains_linf_ball()
    flips = []
    attacked = 0
    X, y = data.x_test, data.y_test
    for i in range(min(limit, len(y))):
        x0 = X[i:i + 1]
        clean_pred = int(model.predict_logits(x0).argmax())
        if clean_pred != y[i]:
            continue
        attacked += 1
        y1h = one_hot(y[i:i + 1], model.classes)
        if structured:
            x_adv, theta = _structured_attack(model, objective, prop, x0, y1h,
                                              cfg.pgd_steps, cfg.pgd_step_size)
        else:
            x_adv = pgd_attack(model, objective, x0, y1h, cfg.epsilon,
                               cfg.pgd_steps, cfg.pgd_step_size, data.data_range)
            theta = None
        adv_pred = int(model.predict_logits(x_adv).argmax())
        if adv_pred == y[i]:
            continue
        npy = os.path.join(out, f"adv_{i}.npy")
        np.save(npy, x_adv[0])
        write_pgm(os.path.join(out, f"adv_{i}.pgm"), np.squeeze(x_adv[0]))
        # dump-and-replay: only report flips the dumped file reproduces
        replay = np.load(npy)[None]
        if int(model.predict_logits(replay).argmax()) == y[i]:
            continue
        rec = {"index": int(i), "label": int(y[i]), "adv_pred": adv_pred,
               "linf": float(np.max(np.abs(x_adv - x0))),
               "pgm": f"adv_{i}.pgm", "npy": f"adv_{i}.npy",
               "replay_confirmed": True}
        if theta is not None:
            rec["coefficients"] = [float(t) for t in theta]
        flips.append(rec)
        if max_flips is not None and len(flips) >= int(max_flips):
            break
    write_report(out, {"config": _echo(config, "attack", seed, out),
                       "attacked": attacked, "flips": flips,
                       "structured": structured})
    return EXIT_OK


def cmd_report(config, seed, out):
    path = os.path.join(out, "report.json")
    try:
        with open(path) as f:
            payload = json.load(f)
    except OSError as exc:
        raise ConfigError(f"no report at {path}: {exc}")
    cmd = payload.get("config", {}).get("command", "?")
    print(f"run: {cmd}  (out: {out})")
    for section in ("before", "final"):
        m = payload.get(section)
        if not m:
            continue
        print(f"  {section}:")
        for k in ("test_error", "pgd_error", "verify_error", "verify_vertex_error"):
            if k in m:
                print(f"    {k:22s} {m[k]:7.2f}%")
    if "flips" in payload:
        print(f"  attacked: {payload['attacked']}  flips: {len(payload['flips'])}")
        for f_ in payload["flips"]:
            print(f"    #{f_['index']}: {f_['label']} -> {f_['adv_pred']} ({f_['pgm']})")
    return EXIT_OK


COMMANDS = {"train": cmd_train, "retrain": cmd_retrain, "attack": cmd_attack,
            "verify": cmd_verify, "report": cmd_report}


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="zonotrain",
        description="Verifiably robust training of small neural networks.")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="JSON config path")
    parser.add_argument("--seed", type=int, default=None, help="override config seed")
    parser.add_argument("--out", default=None, help="override output directory")
    args = parser.parse_args(argv)
    try:
        config = load_config(args.config)
        seed = args.seed if args.seed is not None else int(config.get("seed", 0))
        out = args.out or config.get("out", "zonotrain_out")
        os.makedirs(out, exist_ok=True)
        return COMMANDS[args.command](config, seed, out)
    except UnsupportedOpError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_UNSUPPORTED
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, CheckpointError, DataFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ZonotrainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
