import numpy as np
import pytest

from pyOSEP.core import processFactory, processLogic
from pyOSEP.core.pipelines import (
    AbstractProcess,
    Dict,
    IncompatibleArgsException,
    Pipeline,
    ProcessLogic,
)


def test_dict_missing_key():
    d = Dict()
    assert d['missing_key'] is None
    assert d.missing_key is None


class PlantProcess(AbstractProcess):
    def __call__(self, n, **kwargs) -> Dict:
        return Dict(A=np.eye(n), n=n)


class RecordProcess(AbstractProcess):
    def __call__(self, outcome, **kwargs) -> Dict:
        return Dict(record=outcome)


def test_incompatible_args_exception():
    with pytest.raises(IncompatibleArgsException) as excinfo:
        joined = PlantProcess() >> RecordProcess()
        _ = joined(n=2)
    assert (str(excinfo.value) ==
            "The process 'RecordProcess' received incompatible"
            " payload from the previous process 'PlantProcess'.")


def test_incompatible_pipeline_input():
    with pytest.raises(IncompatibleArgsException) as excinfo:
        (PlantProcess() >> RecordProcess())()
    assert "(input of the pipline)" in str(excinfo.value)


class TimerProcess(AbstractProcess):
    def __call__(self, **kwargs) -> Dict:
        return Dict(t_original=1.0)


class OtherTimerProcess(AbstractProcess):
    def __call__(self, **kwargs) -> Dict:
        return Dict(t_original=2.0)


def test_process_logic():
    @processLogic
    def trace(A, **kwargs):
        return Dict(trace=float(np.trace(A)))

    process = trace()
    assert isinstance(process, ProcessLogic)
    assert process(A=np.eye(3)) == Dict(trace=3.0)


def test_process_factory():
    @processFactory(cache=False)
    def factory_func(fixed: bool):
        return TimerProcess() if fixed else OtherTimerProcess()

    assert isinstance(factory_func(fixed=True), TimerProcess)
    assert isinstance(factory_func(fixed=False), OtherTimerProcess)
    assert factory_func(fixed=True) is not factory_func(fixed=True)


def test_cached_process_factory():
    @processFactory(cache=True)
    def factory_func(fixed: bool):
        return TimerProcess() if fixed else OtherTimerProcess()

    process = factory_func(fixed=True)
    assert isinstance(process, TimerProcess)
    assert isinstance(factory_func(fixed=False), OtherTimerProcess)
    # call again
    assert factory_func(fixed=True) is process


def test_pipeline():
    pipeline = Pipeline([PlantProcess(), TimerProcess()])
    result = pipeline(n=2, seed=7)
    assert result.seed == 7
    assert result.t_original == 1.0
    np.testing.assert_array_equal(result.A, np.eye(2))


def test_later_payload_has_precedence():
    result = (TimerProcess() >> OtherTimerProcess())(t_original=0.0)
    assert result.t_original == 2.0


def test_process_rshift():
    pipeline = PlantProcess() >> TimerProcess()
    assert isinstance(pipeline, Pipeline)
    assert pipeline(n=1).t_original == 1.0


def test_pipeline_rshift():
    pipeline = Pipeline([PlantProcess()]) >> TimerProcess()
    assert isinstance(pipeline, Pipeline)
    assert len((pipeline >> pipeline).processes) == 4
    with pytest.raises(ValueError):
        pipeline >> 3


def test_process_before_pipeline():
    pipeline = TimerProcess() >> (PlantProcess() >> RecordProcess())
    assert len(pipeline.processes) == 3
    with pytest.raises(ValueError):
        TimerProcess() >> "record"
