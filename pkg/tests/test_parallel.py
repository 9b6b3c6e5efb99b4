import pytest

from frachopf._parallel import pmap, thread_count


def test_thread_count_env(monkeypatch):
    monkeypatch.setenv("FRACHOPF_THREADS", "3")
    assert thread_count() == 3
    monkeypatch.setenv("FRACHOPF_THREADS", "0")
    assert thread_count() >= 1
    monkeypatch.setenv("FRACHOPF_THREADS", "-2")
    with pytest.raises(ValueError):
        thread_count()


@pytest.mark.parametrize("threads", ["1", "4"])
def test_pmap_preserves_order(monkeypatch, threads):
    monkeypatch.setenv("FRACHOPF_THREADS", threads)
    assert pmap(lambda x: x * x, range(50)) == [x * x for x in range(50)]
