import pytest

from macsim.kernel import MS, S
from macsim.network import Network, RunConfig
from macsim.traffic import GeneratorSpec, Priority

# lines collected by the acceptance suite, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def normal_only(period=200 * MS):
    return (GeneratorSpec(Priority.NORMAL, "cbr", period),)


def build(protocol="bop", nodes=2, duration=20 * S, seed=1, gens=None, **kw):
    """Network for a small scenario; ``gens`` overrides every source's generators."""
    net_kw = {k: kw.pop(k) for k in ("keep_log", "keep_packets", "keep_samples", "pure", "coalesce", "trace")
              if k in kw}
    cfg = RunConfig(protocol=protocol, node_count=nodes, duration=duration,
                    generators=gens if gens is not None else RunConfig().generators, **kw)
    return Network(cfg, seed, **net_kw)


@pytest.fixture
def small_run():
    def run(*args, **kw):
        return build(*args, **kw).run()
    return run
