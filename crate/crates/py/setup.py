# Builds the Rust extension with cargo and drops it next to __init__.py.
import shutil
import subprocess
import sys
import sysconfig
from pathlib import Path

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext

HERE = Path(__file__).resolve().parent


class CargoBuild(build_ext):
    def build_extension(self, ext):
        subprocess.check_call(
            ["cargo", "build", "--release", "--features", "extension-module", "--manifest-path", str(HERE / "Cargo.toml")]
        )
        target = Path(
            subprocess.check_output(
                ["cargo", "metadata", "--format-version", "1", "--no-deps", "--manifest-path", str(HERE / "Cargo.toml")],
                text=True,
            ).split('"target_directory":"')[1].split('"')[0]
        )
        name = {"darwin": "lib_native.dylib", "win32": "_native.dll"}.get(sys.platform, "lib_native.so")
        dest = Path(self.get_ext_fullpath(ext.name))
        dest.parent.mkdir(parents=True, exist_ok=True)
        shutil.copyfile(target / "release" / name, dest)


setup(
    ext_modules=[Extension("platoon._native", sources=[])],
    cmdclass={"build_ext": CargoBuild},
)
