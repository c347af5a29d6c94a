import importlib.util
from pathlib import Path

import pytest

from errors import CorpusParseError
from tsdata import load_corpus

SCRIPT = Path(__file__).resolve().parent.parent / "scripts" / "convert_tsf.py"
module_spec = importlib.util.spec_from_file_location("convert_tsf", SCRIPT)
convert_tsf = importlib.util.module_from_spec(module_spec)
module_spec.loader.exec_module(convert_tsf)

TSF = """# M1-style sample
@relation sample
@attribute series_name string
@attribute start_timestamp date
@frequency quarterly
@horizon 8
@missing true
@equallength false
@data
T1:1990-01-01 00-00-00:1,2,3,4,5,6,7,8
T2:1990-01-01 00-00-00:4,?,6
T3:1990-01-01 00-00-00:9.5,8.5,7.5,6.5,5.5,4.5,3.5,2.5,1.5
"""


class TestConvertTsf:
    def test_skips_series_with_missing_values(self, tmp_path):
        source = tmp_path / "sample.tsf"
        source.write_text(TSF, encoding="cp1252")
        out = tmp_path / "sample.csv"
        assert convert_tsf.convert(source, out) == 2
        corpus = load_corpus(out, 4, horizon=1, input_size=1)
        assert corpus.ids == ["T1", "T3"]
        assert list(corpus.series[1].values[:2]) == [9.5, 8.5]

    def test_wrong_field_count_names_line(self, tmp_path):
        source = tmp_path / "bad.tsf"
        source.write_text("@attribute series_name string\n@data\nT1:1,2:3\n", encoding="cp1252")
        with pytest.raises(CorpusParseError, match="line 3"):
            list(convert_tsf.read_tsf(source))

    def test_missing_data_section(self, tmp_path):
        source = tmp_path / "empty.tsf"
        source.write_text("@attribute series_name string\n", encoding="cp1252")
        assert convert_tsf.main([str(source), str(tmp_path / "out.csv")]) == 1

    def test_missing_input(self, tmp_path):
        assert convert_tsf.main([str(tmp_path / "absent.tsf"), str(tmp_path / "out.csv")]) == 2
