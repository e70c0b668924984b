from . import write_histories

for path in write_histories():
    print(path)
