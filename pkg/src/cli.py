"""
命令行接口模块

提供生成实例、量化、求解、条件检验、实验扫描和顶点枚举校验等子命令。

退出码：0 成功/条件成立，1 条件不成立，2 用法或输入错误（也包括维数超限和
线性规划数值失败，失败信息写到 stderr），3 不可行，4 节点预算耗尽。
"""

from pathlib import Path
from typing import Any, Dict, Optional

import click
import numpy as np
from loguru import logger

from . import __version__
from .bench import ExperimentConfig, write_experiment
from .config import Config
from .exceptions import ConfigError, DimensionTooLarge, NumericalFailure, RecoveryError
from .models import (
    BnbConfig,
    BoundMode,
    MagnitudePrior,
    Observation,
    Instance,
    QuantSpec,
    SolveStatus,
    build_polytope,
    check_prop1,
    check_prop2,
    check_prop3,
    generate,
    oracle_vertex_min,
    quantize,
    solve_cqp,
    solve_l1,
)
from .models.conditions import Quantifier
from .models.solvers import estimate_support
from .utils import FileUtils, setup_logging

EXIT_FAILS = 1
EXIT_USAGE = 2
EXIT_INFEASIBLE = 3
EXIT_BUDGET = 4


def _fmt(values: Any) -> str:
    return "[" + ", ".join(f"{float(v) + 0.0:.6g}" for v in np.ravel(values)) + "]"


def _load(path: str) -> Dict[str, Any]:
    try:
        return FileUtils().read_json(path)
    except (OSError, ValueError) as e:
        raise click.UsageError(f"无法读取 {path}: {e}")


def _observation(doc: Dict[str, Any]) -> Observation:
    try:
        return Observation.from_dict(doc)
    except (KeyError, TypeError, ValueError) as e:
        raise click.UsageError(f"观测文件格式错误: {e}")


@click.group()
@click.option("--config", "-c", "config_path", default=None, help="配置文件路径（默认 config/config.yaml）")
@click.option("--verbose", "-v", is_flag=True, help="详细输出")
@click.version_option(__version__, prog_name="sparse-cqp")
@click.pass_context
def cli(ctx, config_path: Optional[str], verbose: bool):
    """量化压缩数据下的稀疏非负参数恢复"""
    ctx.ensure_object(dict)

    try:
        ctx.obj["config"] = Config(config_path)
    except Exception as e:
        click.echo(f"加载配置失败: {e}", err=True)
        ctx.exit(EXIT_USAGE)

    log_config = dict(ctx.obj["config"].logging_config)
    if verbose:
        log_config["level"] = "DEBUG"
    setup_logging(log_config)


@cli.command(name="generate")
@click.option("--n", "n", type=int, required=True, help="参数维数")
@click.option("--m", "m", type=int, required=True, help="测量个数")
@click.option("--k", "k", type=int, required=True, help="稀疏度")
@click.option("--alpha", type=float, required=True, help="非零幅值下界")
@click.option("--beta", type=float, required=True, help="非零幅值上界")
@click.option("--seed", type=int, default=0, show_default=True, help="随机种子")
@click.option("--out", "out", type=click.Path(dir_okay=False), required=True, help="实例输出文件")
def generate_cmd(n: int, m: int, k: int, alpha: float, beta: float, seed: int, out: str):
    """生成随机实例"""
    if k > n:
        raise click.UsageError(f"k exceeds n (k={k}, n={n})")
    try:
        prior = MagnitudePrior(alpha, beta)
        inst = generate(n, m, k, prior, seed)
    except ValueError as e:
        raise click.UsageError(str(e))

    FileUtils().write_json(out, inst.to_dict())
    click.echo(f"instance n={n} m={m} k={k} seed={seed} support={inst.support().tolist()} -> {out}")


@cli.command(name="quantize")
@click.option("--in", "in_path", type=click.Path(exists=True, dir_okay=False), required=True, help="实例文件")
@click.option("--levels", type=int, required=True, help="量化级数")
@click.option(
    "--bound-mode",
    type=click.Choice([mode.value for mode in BoundMode]),
    default=BoundMode.HALF_STEP.value,
    show_default=True,
    help="误差界取半步长或整步长",
)
@click.option("--range-a", type=float, default=None, help="A 的码本半宽（默认取最大绝对值）")
@click.option("--range-y", type=float, default=None, help="y 的码本半宽（默认取最大绝对值）")
@click.option("--alpha", type=float, default=None, help="覆盖实例文件中的 alpha")
@click.option("--beta", type=float, default=None, help="覆盖实例文件中的 beta")
@click.option("--out", "out", type=click.Path(dir_okay=False), required=True, help="观测输出文件")
@click.pass_context
def quantize_cmd(
    ctx,
    in_path: str,
    levels: int,
    bound_mode: str,
    range_a: Optional[float],
    range_y: Optional[float],
    alpha: Optional[float],
    beta: Optional[float],
    out: str,
):
    """量化实例，写出观测文件"""
    try:
        inst = Instance.from_dict(_load(in_path))
        prior = inst.prior
        if alpha is not None or beta is not None:
            if prior is None and (alpha is None or beta is None):
                raise click.UsageError("实例文件缺少 alpha/beta，请同时指定 --alpha 和 --beta")
            prior = MagnitudePrior(
                alpha if alpha is not None else prior.alpha, beta if beta is not None else prior.beta
            )
        if prior is None:
            raise click.UsageError("实例文件缺少 alpha/beta，请用 --alpha/--beta 指定")

        mode = BoundMode(bound_mode)
        specA = QuantSpec.covering(inst.A, levels, mode)
        specY = QuantSpec.covering(inst.y, levels, mode)
        if range_a is not None:
            specA = QuantSpec(levels, range_a, specA.bound * range_a / specA.range)
        if range_y is not None:
            specY = QuantSpec(levels, range_y, specY.bound * range_y / specY.range)
        obs = quantize(inst, specA, specY, prior)
    except RecoveryError as e:
        click.echo(f"量化失败: {e}", err=True)
        ctx.exit(EXIT_USAGE)
    except (KeyError, TypeError, ValueError) as e:
        raise click.UsageError(str(e))

    # 实例、观测与凹二次规划的可行多面体写入同一个容器
    doc = inst.to_dict()
    doc.update(obs.to_dict())
    doc.update(build_polytope(obs, prior.d).to_dict())
    FileUtils().write_json(out, doc)
    click.echo(f"observation levels={levels} deltaA={obs.deltaA:.6g} deltaY={obs.deltaY:.6g} -> {out}")


@cli.command(name="solve")
@click.option("--method", type=click.Choice(["l1", "cqp"]), required=True, help="恢复方法")
@click.option("--in", "in_path", type=click.Path(exists=True, dir_okay=False), required=True, help="观测文件")
@click.option("--out", "out", type=click.Path(dir_okay=False), default=None, help="结果输出文件")
@click.option("--gap", type=float, default=None, help="分支定界绝对间隙")
@click.option("--max-nodes", type=int, default=None, help="分支定界节点预算")
@click.pass_context
def solve_cmd(ctx, method: str, in_path: str, out: Optional[str], gap: Optional[float], max_nodes: Optional[int]):
    """求解恢复问题"""
    config = ctx.obj["config"]
    obs = _observation(_load(in_path))
    d = obs.prior.d
    solver_config = config.solver_config

    try:
        if method == "l1":
            sol = solve_l1(
                build_polytope(obs, np.inf),
                debug=bool(config.get("lp.debug", False)),
                lp_options=config.lp_options,
            )
        else:
            cfg = BnbConfig(
                abs_gap=gap if gap is not None else float(solver_config.get("abs_gap", 1e-8)),
                max_nodes=max_nodes if max_nodes is not None else int(solver_config.get("max_nodes", 1_000_000)),
                branch_rule=solver_config.get("branch_rule", "WidestGap"),
                lp_options=config.lp_options,
            )
            sol = solve_cqp(build_polytope(obs, d), d, cfg)
    except ValueError as e:
        raise click.UsageError(str(e))
    except NumericalFailure as e:
        logger.error(f"线性规划数值失败: {e}")
        click.echo(f"数值失败: {e}", err=True)
        ctx.exit(EXIT_USAGE)
    except RecoveryError as e:
        click.echo(f"求解失败: {e}", err=True)
        ctx.exit(EXIT_USAGE)

    support = estimate_support(sol.x, d, float(solver_config.get("support_tol", 1e-6))) if sol.feasible else []
    if out:
        doc = sol.to_dict()
        doc.update({"method": method, "support": [int(i) for i in support]})
        FileUtils().write_json(out, doc)

    click.echo(f"status = {sol.status.value}")
    if not sol.feasible:
        click.echo("可行集为空", err=True)
        ctx.exit(EXIT_INFEASIBLE)
    click.echo(f"x = {_fmt(sol.x)}")
    click.echo(f"objective = {sol.objective:.10g}")
    click.echo(f"support = {[int(i) for i in support]}")
    click.echo(f"nodes = {sol.nodes}")
    if sol.status is SolveStatus.FEASIBLE:
        click.echo(f"节点预算耗尽，剩余间隙 {sol.gap:.3g}", err=True)
        ctx.exit(EXIT_BUDGET)


@cli.command(name="check")
@click.option("--prop", type=click.Choice(["1", "2", "3"]), required=True, help="要检验的条件")
@click.option("--in", "in_path", type=click.Path(exists=True, dir_okay=False), required=True, help="数据文件")
@click.option("--alpha", type=float, default=None, help="非零幅值下界")
@click.option("--beta", type=float, default=None, help="非零幅值上界")
@click.option("--delta-y", type=float, default=None, help="输出误差界")
@click.option("--delta-a", type=float, default=None, help="矩阵误差界（条件 3）")
@click.option("--literal", is_flag=True, help="对全部非零 γ 检验（默认只检验支撑集失配的 γ）")
@click.pass_context
def check_cmd(
    ctx,
    prop: str,
    in_path: str,
    alpha: Optional[float],
    beta: Optional[float],
    delta_y: Optional[float],
    delta_a: Optional[float],
    literal: bool,
):
    """检验支撑集恢复的充分条件"""
    config = ctx.obj["config"].conditions_config
    doc = _load(in_path)

    def pick(flag: Optional[float], key: str) -> float:
        value = flag if flag is not None else doc.get(key)
        if value is None:
            raise click.UsageError(f"缺少 {key}：请在数据文件中提供或通过命令行指定")
        return float(value)

    matrix_key = "QA" if prop == "3" else "A"
    if matrix_key not in doc:
        raise click.UsageError(f"数据文件缺少 {matrix_key}")
    prior = MagnitudePrior(pick(alpha, "alpha"), pick(beta, "beta"))
    deltaY = pick(delta_y, "deltaY")
    quantifier = Quantifier.LITERAL if literal else Quantifier(config.get("quantifier", "mismatch"))
    max_n = int(config.get("max_n", 12))

    try:
        if prop == "1":
            report = check_prop1(doc["A"], prior.d, deltaY, max_n=max_n)
        elif prop == "2":
            report = check_prop2(doc["A"], prior, deltaY, quantifier, max_n=max_n)
        else:
            report = check_prop3(doc["QA"], prior, deltaY, pick(delta_a, "deltaA"), quantifier, max_n=max_n)
    except DimensionTooLarge as e:
        click.echo(str(e), err=True)
        ctx.exit(EXIT_USAGE)
    except ValueError as e:
        raise click.UsageError(str(e))

    click.echo(f"proposition = {report.proposition.value}")
    click.echo(f"holds = {str(report.holds).lower()}")
    click.echo(f"margin = {report.margin:.10g}")
    click.echo(f"threshold = {report.threshold:.10g}")
    click.echo(f"worstGamma = {_fmt(report.worst_gamma)}")
    ctx.exit(0 if report.holds else EXIT_FAILS)


@cli.command(name="experiment")
@click.option("--config", "exp_path", type=click.Path(exists=True, dir_okay=False), required=True, help="实验配置（JSON）")
@click.option("--out-dir", type=click.Path(file_okay=False), default=None, help="输出目录")
@click.option("--jobs", type=click.IntRange(min=1), default=None, help="并行进程数上限")
@click.option("--progress/--no-progress", default=False, help="显示进度条")
@click.pass_context
def experiment_cmd(ctx, exp_path: str, out_dir: Optional[str], jobs: Optional[int], progress: bool):
    """执行实验扫描，写出 summary.csv、runs.csv 和 manifest.json"""
    config = ctx.obj["config"]
    try:
        cfg = ExperimentConfig.from_dict(_load(exp_path)).with_settings(config)
    except ConfigError as e:
        click.echo(f"实验配置错误: {e}", err=True)
        ctx.exit(EXIT_USAGE)

    bench = config.bench_config
    target = Path(out_dir or bench.get("output_dir", "./results"))
    workers = jobs if jobs is not None else int(bench.get("jobs", 1))
    manifest = write_experiment(cfg, target, jobs=workers, progress=progress, app_config=config.snapshot())
    for name, path in manifest.outputs.items():
        click.echo(f"{name}: {path}")


@cli.command(name="oracle")
@click.option("--in", "in_path", type=click.Path(exists=True, dir_okay=False), required=True, help="观测文件")
@click.pass_context
def oracle_cmd(ctx, in_path: str):
    """用顶点枚举求凹二次规划的全局最优（n <= 12）"""
    obs = _observation(_load(in_path))
    d = obs.prior.d
    try:
        sol = oracle_vertex_min(build_polytope(obs, d), d)
    except DimensionTooLarge as e:
        click.echo(str(e), err=True)
        ctx.exit(EXIT_USAGE)

    click.echo(f"status = {sol.status.value}")
    if not sol.feasible:
        ctx.exit(EXIT_INFEASIBLE)
    click.echo(f"x = {_fmt(sol.x)}")
    click.echo(f"objective = {sol.objective:.10g}")
    click.echo(f"vertices examined = {sol.nodes}")
    logger.debug(f"顶点枚举用时 {sol.wall_time:.3f}s")


def main():
    """主函数"""
    cli()


if __name__ == "__main__":
    main()
