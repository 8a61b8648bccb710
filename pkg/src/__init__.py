# 云边协同转码仿真主包 / Cloud-edge transcoding simulator main package
